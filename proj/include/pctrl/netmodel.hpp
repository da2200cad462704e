#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pctrl/rng.hpp"

namespace pctrl {

// Cell layouts. line3 places the B cells in a row (B=3 by default, any B >= 1
// accepted); hex7_wraparound is the 7-cell cluster with toroidal distances.
enum class Layout { line3, hex7_wraparound };

enum class ConstraintMode { per_user, sum_power };

std::string_view to_string(Layout layout);
Layout parse_layout(std::string_view text);
std::string_view to_string(ConstraintMode mode);
ConstraintMode parse_constraint_mode(std::string_view text);

double dbm_to_watts(double dbm);
double watts_to_dbm(double watts);

struct NetworkConfig {
  std::size_t num_cells = 3;
  std::size_t users_per_cell = 2;
  double bandwidth_hz = 20e6;
  double pmax_dbm = 43.0;
  double noise_psd_dbm_hz = -150.0;
  double noise_figure_db = 9.0;
  double ref_distance_m = 0.3920;
  double cell_radius_m = 1000.0;
  double pathloss_exp = 3.76;
  Layout layout = Layout::line3;

  double pmax_watts() const { return dbm_to_watts(pmax_dbm); }
  std::size_t num_links() const { return num_cells * users_per_cell; }

  // Throws ConfigError on any violated invariant.
  void validate() const;
};

struct Point {
  double x = 0.0;
  double y = 0.0;
};

double distance(Point a, Point b);

struct Geometry {
  std::vector<Point> bs_positions;    // B
  std::vector<Point> user_positions;  // B*K, serving-cell major

  const Point& user(std::size_t cell, std::size_t k, std::size_t users_per_cell) const {
    return user_positions[cell * users_per_cell + k];
  }
};

// h(b_tx, b_cell, k): gain from BS b_tx to user k served by BS b_cell.
class ChannelTensor {
 public:
  ChannelTensor() = default;
  ChannelTensor(std::size_t num_cells, std::size_t users_per_cell);

  std::size_t num_cells() const { return cells_; }
  std::size_t users_per_cell() const { return users_; }

  std::complex<double>& operator()(std::size_t tx, std::size_t cell, std::size_t k) {
    return h_[(tx * cells_ + cell) * users_ + k];
  }
  const std::complex<double>& operator()(std::size_t tx, std::size_t cell, std::size_t k) const {
    return h_[(tx * cells_ + cell) * users_ + k];
  }
  double gain(std::size_t tx, std::size_t cell, std::size_t k) const {
    return std::norm((*this)(tx, cell, k));
  }

  std::span<const std::complex<double>> data() const { return h_; }
  std::span<std::complex<double>> data() { return h_; }

 private:
  std::size_t cells_ = 0;
  std::size_t users_ = 0;
  std::vector<std::complex<double>> h_;
};

// p(b, k) in watts.
class PowerMatrix {
 public:
  PowerMatrix() = default;
  PowerMatrix(std::size_t num_cells, std::size_t users_per_cell, double fill = 0.0);

  std::size_t num_cells() const { return cells_; }
  std::size_t users_per_cell() const { return users_; }

  double& operator()(std::size_t b, std::size_t k) { return p_[b * users_ + k]; }
  double operator()(std::size_t b, std::size_t k) const { return p_[b * users_ + k]; }

  std::span<const double> data() const { return p_; }
  std::span<double> data() { return p_; }
  double row_sum(std::size_t b) const;

  bool operator==(const PowerMatrix&) const = default;

 private:
  std::size_t cells_ = 0;
  std::size_t users_ = 0;
  std::vector<double> p_;
};

// BS centers for the configured layout.
std::vector<Point> bs_layout(const NetworkConfig& cfg);

// Pointy-top hexagon of circumradius `radius` centered on `center`.
bool inside_hexagon(Point p, Point center, double radius);

Geometry sample_geometry(const NetworkConfig& cfg, Rng& rng);

// Distance used for pathloss: direct, or minimum-image over the wraparound
// cluster translations for hex7_wraparound.
double link_distance(const NetworkConfig& cfg, Point bs, Point user);

// (1 + d/d0)^-alpha
double pathloss(double d, double d0, double alpha);

ChannelTensor sample_channels(const Geometry& geom, const NetworkConfig& cfg, Rng& rng);

// Noise power in watts, identical for every user.
double noise_power(const NetworkConfig& cfg);

double sinr(const ChannelTensor& h, const PowerMatrix& p, double noise_w, std::size_t b,
            std::size_t k);

// Bandwidth-scaled sum-rate in bits/s.
double sum_rate(const ChannelTensor& h, const PowerMatrix& p, double noise_w, double bandwidth_hz);

PowerMatrix project_powers(const PowerMatrix& p, double pmax_watts, ConstraintMode mode);

bool is_feasible(const PowerMatrix& p, double pmax_watts, ConstraintMode mode,
                 double slack = 1e-12);

}  // namespace pctrl
