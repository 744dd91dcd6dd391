#pragma once

// JSON serialization for the library types and the scenario configuration.

#include "subrigid/control.hpp"
#include "subrigid/errors.hpp"
#include "subrigid/experiment.hpp"
#include "subrigid/graph.hpp"
#include "subrigid/rigidity.hpp"
#include "subrigid/simnet.hpp"
#include "subrigid/subframework.hpp"

#include <nlohmann/json.hpp>

#include <Eigen/Dense>

#include <set>
#include <string>
#include <vector>

namespace subrigid {

using nlohmann::json;

inline json vector_to_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline void to_json(json& j, const Graph& g) {
  json edges = json::array();
  for (const auto& e : g.edges()) edges.push_back({e.i, e.j});
  j = json{{"n", g.size()}, {"edges", std::move(edges)}};
}

inline void from_json(const json& j, Graph& g) {
  g = Graph(j.at("n").get<std::size_t>());
  for (const auto& e : j.at("edges")) {
    if (!e.is_array() || e.size() != 2) throw std::invalid_argument("edge must be a pair of node ids");
    g.add_edge(e[0].get<NodeId>(), e[1].get<NodeId>());
  }
}

/// {"dim": d, "graph": {...}, "positions": [[x, y], ...]} with one row per node.
inline void to_json(json& j, const Framework& fw) {
  json pos = json::array();
  for (NodeId i = 0; i < fw.size(); ++i) pos.push_back(vector_to_json(fw.position(i)));
  j = json{{"dim", fw.dim()}, {"graph", fw.graph}, {"positions", std::move(pos)}};
}

inline void from_json(const json& j, Framework& fw) {
  auto g = j.at("graph").get<Graph>();
  const auto& rows = j.at("positions");
  const auto d = j.at("dim").get<std::size_t>();
  if (rows.size() != g.size()) throw std::invalid_argument("one position per node required");
  Positions x(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(g.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != d) throw std::invalid_argument("position of node " + std::to_string(i) + " has wrong dimension");
    for (std::size_t a = 0; a < d; ++a) x(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(i)) = rows[i][a].get<double>();
  }
  fw = Framework(std::move(g), std::move(x));
}

inline void to_json(json& j, const RigidityReport& r) {
  j = json{{"rank_R", r.rank_R},       {"f", r.f},   {"rho", r.rho},
           {"rigid", r.rigid},         {"degenerate", r.degenerate},
           {"eigenvalues", vector_to_json(r.eigenvalues)}, {"nu", vector_to_json(r.nu)}};
}

inline void to_json(json& j, const ExtentAssignment& e) { j = e.extents; }
inline void from_json(const json& j, ExtentAssignment& e) { e.extents = j.get<std::vector<std::size_t>>(); }

inline void to_json(json& j, const LoadReport& r) {
  j = json{{"total", r.total}, {"standardized", r.standardized}, {"per_node", r.per_node}};
}

inline void to_json(json& j, const ControlParams& p) {
  j = json{{"range", p.range},
           {"steepness", p.steepness},
           {"rigidity_exponent", p.rigidity_exponent},
           {"collision_exponent", p.collision_exponent},
           {"gain_rigidity", p.gain_rigidity},
           {"gain_load", p.gain_load},
           {"gain_collision", p.gain_collision},
           {"dt", p.dt},
           {"weight_prune_threshold", p.weight_prune_threshold},
           {"weighted_rigidity", p.weighted_rigidity},
           {"max_step_halvings", p.max_step_halvings},
           {"rigidity_tol", p.rigidity_tol}};
}

inline void to_json(json& j, const LocalizationParams& p) {
  j = json{{"measurement_sigma", p.measurement_sigma},
           {"modeled_sigma", p.modeled_sigma},
           {"anchor_noise", p.anchor_noise},
           {"anchor_sigma", p.anchor_sigma},
           {"process_noise", p.process_noise},
           {"motion_inflation", p.motion_inflation},
           {"initial_error", p.initial_error},
           {"anchors", p.anchors}};
}

inline void to_json(json& j, const ScenarioConfig& c) {
  j = json{{"seed", c.seed},
           {"n", c.n},
           {"region_width", c.region_width},
           {"region_height", c.region_height},
           {"region_depth", c.region_depth},
           {"range", c.range},
           {"dim", c.dim},
           {"ensemble_count", c.ensemble_count},
           {"ensemble_ranges", c.ensemble_ranges},
           {"require_rigid", c.require_rigid},
           {"min_nontrivial_extents", c.min_nontrivial_extents},
           {"max_rejections", c.max_rejections},
           {"duration", c.duration},
           {"control", c.control},
           {"localization", c.localization},
           {"use_estimates", c.use_estimates},
           {"output_path", c.output_path},
           {"summary_path", c.summary_path},
           {"trace_path", c.trace_path},
           {"threads", c.threads}};
}

namespace detail {

// Copies every key of `src` onto the matching field; unknown keys and type
// mismatches become InvalidConfig.
class Overlay {
 public:
  Overlay(const json& src, std::string scope) : src_(src), scope_(std::move(scope)) {
    if (!src_.is_object()) throw InvalidConfig(scope_ + " must be a JSON object");
  }

  template <class T>
  Overlay& field(const char* key, T& out) {
    seen_.insert(key);
    const auto it = src_.find(key);
    if (it == src_.end()) return *this;
    try {
      out = it->template get<T>();
    } catch (const json::exception&) {
      throw InvalidConfig("bad value for " + scope_ + key);
    }
    return *this;
  }

  template <class F>
  Overlay& nested(const char* key, F&& apply) {
    seen_.insert(key);
    const auto it = src_.find(key);
    if (it != src_.end()) apply(*it, scope_ + key + ".");
    return *this;
  }

  void finish() const {
    for (const auto& item : src_.items())
      if (!seen_.count(item.key())) throw InvalidConfig("unknown config key " + scope_ + item.key());
  }

 private:
  const json& src_;
  std::string scope_;
  std::set<std::string> seen_;
};

}  // namespace detail

inline void apply_json(const json& j, ControlParams& p, const std::string& scope = "") {
  detail::Overlay(j, scope)
      .field("range", p.range)
      .field("steepness", p.steepness)
      .field("rigidity_exponent", p.rigidity_exponent)
      .field("collision_exponent", p.collision_exponent)
      .field("gain_rigidity", p.gain_rigidity)
      .field("gain_load", p.gain_load)
      .field("gain_collision", p.gain_collision)
      .field("dt", p.dt)
      .field("weight_prune_threshold", p.weight_prune_threshold)
      .field("weighted_rigidity", p.weighted_rigidity)
      .field("max_step_halvings", p.max_step_halvings)
      .field("rigidity_tol", p.rigidity_tol)
      .finish();
}

inline void apply_json(const json& j, LocalizationParams& p, const std::string& scope = "") {
  detail::Overlay(j, scope)
      .field("measurement_sigma", p.measurement_sigma)
      .field("modeled_sigma", p.modeled_sigma)
      .field("anchor_noise", p.anchor_noise)
      .field("anchor_sigma", p.anchor_sigma)
      .field("process_noise", p.process_noise)
      .field("motion_inflation", p.motion_inflation)
      .field("initial_error", p.initial_error)
      .field("anchors", p.anchors)
      .finish();
}

/// Overlays a (possibly partial) JSON config onto `c`.
inline void apply_json(const json& j, ScenarioConfig& c) {
  detail::Overlay(j, "")
      .field("seed", c.seed)
      .field("n", c.n)
      .field("region_width", c.region_width)
      .field("region_height", c.region_height)
      .field("region_depth", c.region_depth)
      .field("range", c.range)
      .field("dim", c.dim)
      .field("ensemble_count", c.ensemble_count)
      .field("ensemble_ranges", c.ensemble_ranges)
      .field("require_rigid", c.require_rigid)
      .field("min_nontrivial_extents", c.min_nontrivial_extents)
      .field("max_rejections", c.max_rejections)
      .field("duration", c.duration)
      .nested("control", [&](const json& s, const std::string& scope) { apply_json(s, c.control, scope); })
      .nested("localization", [&](const json& s, const std::string& scope) { apply_json(s, c.localization, scope); })
      .field("use_estimates", c.use_estimates)
      .field("output_path", c.output_path)
      .field("summary_path", c.summary_path)
      .field("trace_path", c.trace_path)
      .field("threads", c.threads)
      .finish();
}

inline void to_json(json& j, const NetworkRecord& r) {
  j = json{{"range", r.range},
           {"index", r.index},
           {"nodes", r.nodes},
           {"edges", r.edges},
           {"diameter", r.diameter},
           {"worst_extent", r.worst_extent},
           {"load", r.load},
           {"standardized_load", r.standardized_load},
           {"upper_load", r.upper_load},
           {"upper_standardized_load", r.upper_standardized_load},
           {"rejections", r.rejections}};
}

/// Per-group histograms plus pooled extent statistics.
inline json ensemble_summary(const EnsembleResult& result, const std::vector<double>& ranges) {
  auto hist = [](const std::map<std::size_t, std::size_t>& h) {
    json out = json::object();
    for (const auto& [k, v] : h) out[std::to_string(k)] = v;
    return out;
  };
  json groups = json::array();
  for (double r : ranges) {
    std::size_t rejections = 0, count = 0;
    for (const auto& rec : result.records)
      if (rec.range == r) {
        rejections += rec.rejections;
        ++count;
      }
    groups.push_back({{"range", r},
                      {"networks", count},
                      {"rejections", rejections},
                      {"diameter_mode", result.diameter_mode(r)},
                      {"diameter_histogram", hist(result.diameter_histogram(r))},
                      {"extent_histogram", hist(result.extent_histogram(r))}});
  }
  std::size_t small = 0, small_in_band = 0;
  for (const auto& rec : result.records)
    if (rec.worst_extent <= 5) {
      ++small;
      if (rec.standardized_load >= 1.0 && rec.standardized_load <= 4.0) ++small_in_band;
    }
  return {{"groups", std::move(groups)},
          {"networks", result.records.size()},
          {"fraction_extent_at_most_5", result.fraction_extent_at_most(5)},
          {"extent_at_most_5_with_load_in_1_4", small_in_band},
          {"extent_at_most_5", small}};
}

inline json to_json_event(std::size_t tick, const TraceEvent& e) {
  return {{"tick", tick}, {"round", e.round}, {"kind", to_string(e.kind)}, {"origin", e.origin},
          {"target", e.target}, {"from", e.from}, {"to", e.to}, {"ttl", e.ttl}};
}

}  // namespace subrigid
