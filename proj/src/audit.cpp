#include <sstream>

#include "adlite/model.hpp"

namespace adlite {

std::size_t pooled_extent(std::size_t extent, std::size_t pools) {
  for (std::size_t i = 0; i < pools; ++i) {
    if (extent % 2 != 0) {
      throw ConfigError("extent " + std::to_string(extent) + " is not divisible by 2 at pool " +
                        std::to_string(i + 1));
    }
    extent /= 2;
  }
  return extent;
}

namespace {

std::string conv_formula(std::size_t k, std::size_t in, std::size_t out) {
  std::ostringstream os;
  os << "(" << k << "^2*" << in << "+1)*" << out;
  return os.str();
}

void add_conv(ParamAudit& a, const std::string& name, std::size_t k, std::size_t in,
              std::size_t out) {
  const std::size_t n = (k * k * in + 1) * out;
  a.entries.push_back({name + ".conv", conv_formula(k, in, out), n, n});
}

void add_bn(ParamAudit& a, const std::string& name, std::size_t ch) {
  const std::size_t n = 2 * ch;
  if (a.mode == AuditMode::full) {
    a.entries.push_back({name, "2*" + std::to_string(ch), n, n});
  } else {
    a.entries.push_back({name, "excluded", 0, n});
  }
}

}  // namespace

ParamAudit param_audit(const AdliteConfig& cfg, AuditMode mode) {
  cfg.validate();
  ParamAudit a;
  a.mode = mode;
  std::size_t in = cfg.input_channels;
  for (std::size_t i = 0; i < cfg.base_filters.size(); ++i) {
    const std::string name = "block" + std::to_string(i + 1);
    const std::size_t out = cfg.base_filters[i];
    add_conv(a, name, i == 0 ? cfg.first_kernel : cfg.other_kernels, in, out);
    add_bn(a, name + ".bn", out);
    in = out;
  }
  for (std::size_t i = 0; i < cfg.dwsc_count; ++i) {
    const std::string name = "dwsc" + std::to_string(i + 1);
    const std::size_t depthwise = (3 * 3 * 1 + 1) * in;
    const std::size_t pointwise = (in + 1) * in;
    if (mode == AuditMode::full) {
      a.entries.push_back({name, "(3^2*1+1)*" + std::to_string(in) + " + (" + std::to_string(in) +
                                     "+1)*" + std::to_string(in),
                           depthwise + pointwise, depthwise + pointwise});
    } else {
      a.entries.push_back(
          {name, "(3^2*1+1)*" + std::to_string(in), depthwise, depthwise + pointwise});
    }
    add_bn(a, name + ".bn", in);
  }
  if (cfg.pcb_enabled) {
    std::size_t pin = cfg.base_filters[cfg.pcb_tap_block - 1];
    for (std::size_t i = 0; i < cfg.pcb_filters.size(); ++i) {
      const std::string name = "pcb" + std::to_string(i + 1);
      add_conv(a, name, cfg.other_kernels, pin, cfg.pcb_filters[i]);
      add_bn(a, name + ".bn", cfg.pcb_filters[i]);
      pin = cfg.pcb_filters[i];
    }
  }
  const std::size_t dense = (cfg.pre_gap_channels() + 1) * cfg.num_classes;
  a.entries.push_back({"dense", "(" + std::to_string(cfg.pre_gap_channels()) + "+1)*" +
                                    std::to_string(cfg.num_classes),
                       dense, dense});
  for (const auto& e : a.entries) {
    a.total += e.formula_count;
    a.allocated_total += e.actual_count;
  }
  return a;
}

std::vector<ShapeEntry> shape_audit(const AdliteConfig& cfg) {
  cfg.validate();
  std::vector<ShapeEntry> out;
  std::size_t spatial = cfg.input_size;
  std::size_t tap_channels = 0, tap_spatial = 0;
  std::size_t ch = cfg.input_channels;
  for (std::size_t i = 0; i < cfg.base_filters.size(); ++i) {
    const std::string name = "block" + std::to_string(i + 1);
    ch = cfg.base_filters[i];
    out.push_back({name + ".conv", {ch, spatial, spatial}});
    spatial = pooled_extent(spatial, 1);
    out.push_back({name + ".pool", {ch, spatial, spatial}});
    out.push_back({name + ".bn", {ch, spatial, spatial}});
    if (cfg.pcb_enabled && i + 1 == cfg.pcb_tap_block) {
      tap_channels = ch;
      tap_spatial = spatial;
    }
  }
  for (std::size_t i = 0; i < cfg.dwsc_count; ++i) {
    const std::string name = "dwsc" + std::to_string(i + 1);
    out.push_back({name, {ch, spatial, spatial}});
    out.push_back({name + ".bn", {ch, spatial, spatial}});
  }
  std::size_t total = ch;
  if (cfg.pcb_enabled) {
    std::size_t pc = tap_channels, ps = tap_spatial;
    out.push_back({"pcb.tx", {pc, ps, ps}});
    for (std::size_t i = 0; i < cfg.pcb_filters.size(); ++i) {
      const std::string name = "pcb" + std::to_string(i + 1);
      pc = cfg.pcb_filters[i];
      out.push_back({name + ".conv", {pc, ps, ps}});
      ps = pooled_extent(ps, 1);
      out.push_back({name + ".pool", {pc, ps, ps}});
      out.push_back({name + ".bn", {pc, ps, ps}});
    }
    if (ps != spatial) throw ConfigError("branch spatial extents differ at the concat");
    total = pc + ch;
    out.push_back({"concat", {total, spatial, spatial}});
  }
  out.push_back({"gap", {total}});
  out.push_back({"dense", {cfg.num_classes}});
  return out;
}

}  // namespace adlite
