#include "qlm/io.hpp"

#include <cmath>
#include <ctime>
#include <fstream>

#include <fmt/format.h>

#include "qlm/errors.hpp"

namespace qlm {

Json to_json(const MassReport& report) {
  Json j;
  j["energy"] = report.energy;
  j["scale"] = report.scale;
  j["h_min"] = report.h_min;
  j["h_prime_min"] = report.h_prime_min;
  j["ric_nu_max"] = report.ric_nu_max;
  j["sigma_convex"] = report.sigma_convex;
  j["sigma_prime_convex"] = report.sigma_prime_convex;
  j["sigma_prime_mean_convex"] = report.sigma_prime_mean_convex;
  j["ric_nu_nonpositive"] = report.ric_nu_nonpositive;
  j["hypotheses_met"] = report.hypotheses_met;
  if (report.penrose_margin) {
    j["penrose_margin"] = *report.penrose_margin;
  } else {
    j["penrose_margin"] = nullptr;
  }
  return j;
}

Json surface_to_json(const SurfaceGeometry& surf) {
  const SphereGrid& grid = surf.grid();
  Json j;
  j["mass"] = surf.ambient().mass();
  j["bandlimit"] = grid.bandlimit();
  j["n_lat"] = grid.n_lat();
  j["n_lon"] = grid.n_lon();
  j["rho"] = std::vector<double>(
      surf.radius().data(), surf.radius().data() + grid.n_nodes());
  return j;
}

ScalarField rho_from_json(const Json& doc, const SphereGrid& grid,
                          double expected_mass) {
  for (const char* key : {"mass", "n_lat", "n_lon", "rho"}) {
    if (!doc.contains(key)) {
      throw ConfigError(
          fmt::format("surface document is missing field '{}'", key));
    }
  }
  const double mass = doc.at("mass").get<double>();
  if (std::abs(mass - expected_mass) > 1e-12) {
    throw ConfigError(fmt::format(
        "surface document field 'mass' is {} but the config mass is {}", mass,
        expected_mass));
  }
  const int n_lat = doc.at("n_lat").get<int>();
  const int n_lon = doc.at("n_lon").get<int>();
  if (n_lat < 2 || n_lon != 2 * n_lat) {
    throw ConfigError(fmt::format(
        "surface document fields 'n_lat'/'n_lon' = {}/{} are not a valid "
        "grid (need n_lon = 2 n_lat, n_lat >= 2)",
        n_lat, n_lon));
  }
  const auto samples = doc.at("rho").get<std::vector<double>>();
  if (static_cast<int>(samples.size()) != n_lat * n_lon) {
    throw ConfigError(fmt::format(
        "surface document field 'rho' has {} samples, expected {}",
        samples.size(), n_lat * n_lon));
  }

  const SphereGrid source(n_lat - 1);
  const ScalarField on_source(
      source, Eigen::Map<const VecX>(samples.data(), samples.size()));
  const VecX& src = on_source.coeffs();

  VecX coeffs = VecX::Zero(grid.n_coeff());
  const int l_max = std::min(source.bandlimit(), grid.bandlimit());
  for (int l = 0; l <= l_max; ++l) {
    for (int m = -l; m <= l; ++m) {
      const int idx = SphereGrid::coeff_index(l, m);
      coeffs(idx) = src(idx);  // the layout is shared across grids
    }
  }
  return ScalarField::from_coeffs(grid, coeffs);
}

Json step_to_json(const ContinuationStep& step) {
  Json j;
  j["s"] = step.s;
  j["energy"] = step.energy;
  j["drift"] = step.drift;
  j["h_min"] = step.sigma.mean_curvature().minCoeff();
  j["h_prime_min"] = step.sigma_prime.mean_curvature().minCoeff();
  j["sigma_convex"] = step.sigma.strictly_convex();
  j["sigma_prime_convex"] = step.sigma_prime.strictly_convex();
  j["solver_residual"] = step.datum.residual_norm;
  j["kernel_dim"] = step.datum.kernel_dim;
  return j;
}

void write_family_log(const std::string& path,
                      const ContinuationFamily& family) {
  std::ofstream out(path);
  if (!out) {
    throw ConfigError(fmt::format("cannot open '{}' for writing", path));
  }
  for (const ContinuationStep& step : family.steps) {
    out << step_to_json(step).dump() << '\n';
  }
}

void save_json(const std::string& path, const Json& doc) {
  std::ofstream out(path);
  if (!out) {
    throw ConfigError(fmt::format("cannot open '{}' for writing", path));
  }
  out << doc.dump(2) << '\n';
}

Json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError(fmt::format("cannot read '{}'", path));
  }
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& err) {
    throw ConfigError(fmt::format("'{}' is not valid JSON: {}", path,
                                  err.what()));
  }
}

std::string timestamp_utc() {
  const std::time_t now = std::time(nullptr);
  std::tm utc{};
  gmtime_r(&now, &utc);
  char buffer[32];
  std::strftime(buffer, sizeof(buffer), "%Y-%m-%dT%H:%M:%SZ", &utc);
  return buffer;
}

}  // namespace qlm
