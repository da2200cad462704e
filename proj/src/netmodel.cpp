#include "pctrl/netmodel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fmt/core.h>
#include <numbers>

#include "pctrl/error.hpp"

namespace pctrl {

namespace {

constexpr double kSqrt3 = std::numbers::sqrt3;

std::array<Point, 6> hex_directions() {
  std::array<Point, 6> dirs{};
  for (std::size_t i = 0; i < 6; ++i) {
    const double a = std::numbers::pi / 3.0 * static_cast<double>(i);
    dirs[i] = {std::cos(a), std::sin(a)};
  }
  return dirs;
}

// Translations that map the 7-cell cluster onto its six mirror images.
std::array<Point, 6> wraparound_shifts(double radius) {
  const double s = kSqrt3 * radius;
  // 2*a1 + a2 with a1 = s(1,0), a2 = s(1/2, sqrt3/2); length sqrt(7)*s.
  const Point base{s * 2.5, s * kSqrt3 / 2.0};
  std::array<Point, 6> shifts{};
  for (std::size_t i = 0; i < 6; ++i) {
    const double a = std::numbers::pi / 3.0 * static_cast<double>(i);
    shifts[i] = {base.x * std::cos(a) - base.y * std::sin(a),
                 base.x * std::sin(a) + base.y * std::cos(a)};
  }
  return shifts;
}

}  // namespace

std::string_view to_string(Layout layout) {
  switch (layout) {
    case Layout::line3: return "line3";
    case Layout::hex7_wraparound: return "hex7_wraparound";
  }
  return "?";
}

Layout parse_layout(std::string_view text) {
  if (text == "line3") return Layout::line3;
  if (text == "hex7_wraparound") return Layout::hex7_wraparound;
  throw ConfigError(fmt::format("unknown layout '{}'", text));
}

std::string_view to_string(ConstraintMode mode) {
  return mode == ConstraintMode::per_user ? "per_user" : "sum_power";
}

ConstraintMode parse_constraint_mode(std::string_view text) {
  if (text == "per_user") return ConstraintMode::per_user;
  if (text == "sum_power") return ConstraintMode::sum_power;
  throw ConfigError(fmt::format("unknown constraint mode '{}'", text));
}

double dbm_to_watts(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }
double watts_to_dbm(double watts) { return 10.0 * std::log10(watts) + 30.0; }

void NetworkConfig::validate() const {
  if (num_cells < 1) throw ConfigError("num_cells must be >= 1");
  if (users_per_cell < 1) throw ConfigError("users_per_cell must be >= 1");
  if (!(bandwidth_hz > 0.0)) throw ConfigError("bandwidth_hz must be > 0");
  if (!(cell_radius_m > 0.0)) throw ConfigError("cell_radius_m must be > 0");
  if (!(ref_distance_m > 0.0)) throw ConfigError("ref_distance_m must be > 0");
  if (!(pathloss_exp > 0.0)) throw ConfigError("pathloss_exp must be > 0");
  if (!std::isfinite(pmax_dbm) || !std::isfinite(noise_psd_dbm_hz) ||
      !std::isfinite(noise_figure_db))
    throw ConfigError("power and noise levels must be finite");
  if (layout == Layout::hex7_wraparound && num_cells != 7)
    throw ConfigError(fmt::format("hex7_wraparound requires num_cells = 7, got {}", num_cells));
}

double distance(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

ChannelTensor::ChannelTensor(std::size_t num_cells, std::size_t users_per_cell)
    : cells_(num_cells), users_(users_per_cell), h_(num_cells * num_cells * users_per_cell) {}

PowerMatrix::PowerMatrix(std::size_t num_cells, std::size_t users_per_cell, double fill)
    : cells_(num_cells), users_(users_per_cell), p_(num_cells * users_per_cell, fill) {}

double PowerMatrix::row_sum(std::size_t b) const {
  double s = 0.0;
  for (std::size_t k = 0; k < users_; ++k) s += (*this)(b, k);
  return s;
}

std::vector<Point> bs_layout(const NetworkConfig& cfg) {
  cfg.validate();
  const double spacing = 2.0 * cfg.cell_radius_m * std::cos(std::numbers::pi / 6.0);
  std::vector<Point> out;
  switch (cfg.layout) {
    case Layout::line3:
      for (std::size_t b = 0; b < cfg.num_cells; ++b)
        out.push_back({spacing * static_cast<double>(b), 0.0});
      break;
    case Layout::hex7_wraparound: {
      out.push_back({0.0, 0.0});
      for (auto d : hex_directions()) out.push_back({spacing * d.x, spacing * d.y});
      break;
    }
  }
  return out;
}

bool inside_hexagon(Point p, Point center, double radius) {
  const double apothem = radius * std::cos(std::numbers::pi / 6.0);
  const double dx = p.x - center.x;
  const double dy = p.y - center.y;
  for (auto n : hex_directions())
    if (dx * n.x + dy * n.y > apothem) return false;
  return true;
}

Geometry sample_geometry(const NetworkConfig& cfg, Rng& rng) {
  Geometry g;
  g.bs_positions = bs_layout(cfg);
  const double r = cfg.cell_radius_m;
  std::uniform_real_distribution<double> u(-r, r);
  g.user_positions.reserve(cfg.num_links());
  for (const auto& c : g.bs_positions) {
    for (std::size_t k = 0; k < cfg.users_per_cell; ++k) {
      Point p;
      do {
        p = {c.x + u(rng), c.y + u(rng)};
      } while (!inside_hexagon(p, c, r));
      g.user_positions.push_back(p);
    }
  }
  return g;
}

double link_distance(const NetworkConfig& cfg, Point bs, Point user) {
  double d = distance(bs, user);
  if (cfg.layout == Layout::hex7_wraparound) {
    for (auto s : wraparound_shifts(cfg.cell_radius_m))
      d = std::min(d, distance({bs.x + s.x, bs.y + s.y}, user));
  }
  return d;
}

double pathloss(double d, double d0, double alpha) { return std::pow(1.0 + d / d0, -alpha); }

ChannelTensor sample_channels(const Geometry& geom, const NetworkConfig& cfg, Rng& rng) {
  const std::size_t B = cfg.num_cells;
  const std::size_t K = cfg.users_per_cell;
  if (geom.bs_positions.size() != B || geom.user_positions.size() != B * K)
    throw ShapeError("geometry does not match network configuration");
  ChannelTensor h(B, K);
  std::normal_distribution<double> n(0.0, std::sqrt(0.5));
  for (std::size_t tx = 0; tx < B; ++tx) {
    for (std::size_t cell = 0; cell < B; ++cell) {
      for (std::size_t k = 0; k < K; ++k) {
        const double d = link_distance(cfg, geom.bs_positions[tx], geom.user(cell, k, K));
        const double beta = pathloss(d, cfg.ref_distance_m, cfg.pathloss_exp);
        const double re = n(rng);
        const double im = n(rng);
        h(tx, cell, k) = std::complex<double>(re, im) * std::sqrt(beta);
      }
    }
  }
  return h;
}

double noise_power(const NetworkConfig& cfg) {
  const double dbm =
      cfg.noise_psd_dbm_hz + 10.0 * std::log10(cfg.bandwidth_hz) + cfg.noise_figure_db;
  return dbm_to_watts(dbm);
}

double sinr(const ChannelTensor& h, const PowerMatrix& p, double noise_w, std::size_t b,
            std::size_t k) {
  const std::size_t B = h.num_cells();
  const std::size_t K = h.users_per_cell();
  double interference = 0.0;
  for (std::size_t tx = 0; tx < B; ++tx) {
    double tx_power = 0.0;
    for (std::size_t kk = 0; kk < K; ++kk)
      if (tx != b || kk != k) tx_power += p(tx, kk);
    interference += tx_power * h.gain(tx, b, k);
  }
  return p(b, k) * h.gain(b, b, k) / (interference + noise_w);
}

double sum_rate(const ChannelTensor& h, const PowerMatrix& p, double noise_w,
                double bandwidth_hz) {
  if (h.num_cells() != p.num_cells() || h.users_per_cell() != p.users_per_cell())
    throw ShapeError("channel and power shapes differ");
  double bits = 0.0;
  for (std::size_t b = 0; b < h.num_cells(); ++b)
    for (std::size_t k = 0; k < h.users_per_cell(); ++k)
      bits += std::log2(1.0 + sinr(h, p, noise_w, b, k));
  return bandwidth_hz * bits;
}

PowerMatrix project_powers(const PowerMatrix& p, double pmax_watts, ConstraintMode mode) {
  PowerMatrix out = p;
  for (auto& v : out.data()) v = std::max(v, 0.0);
  if (mode == ConstraintMode::per_user) {
    for (auto& v : out.data()) v = std::min(v, pmax_watts);
    return out;
  }
  for (std::size_t b = 0; b < out.num_cells(); ++b) {
    // Rescale until the rounded row sum is feasible, so that a second
    // projection is the identity.
    for (int pass = 0; pass < 4; ++pass) {
      const double s = out.row_sum(b);
      if (s <= pmax_watts) break;
      const double scale = pass < 3 ? pmax_watts / s : 1.0 - 4.0 * 2.220446049250313e-16;
      for (std::size_t k = 0; k < out.users_per_cell(); ++k) out(b, k) *= scale;
    }
  }
  return out;
}

bool is_feasible(const PowerMatrix& p, double pmax_watts, ConstraintMode mode, double slack) {
  for (double v : p.data())
    if (!(v >= 0.0)) return false;
  if (mode == ConstraintMode::per_user) {
    for (double v : p.data())
      if (v > pmax_watts * (1.0 + slack)) return false;
    return true;
  }
  for (std::size_t b = 0; b < p.num_cells(); ++b)
    if (p.row_sum(b) > pmax_watts * (1.0 + slack)) return false;
  return true;
}

}  // namespace pctrl
