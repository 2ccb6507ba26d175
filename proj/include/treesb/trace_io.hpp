#pragma once

#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "treesb/errors.hpp"
#include "treesb/gibbs_engine.hpp"
#include "treesb/tree.hpp"

namespace treesb {

// Trace files hold one JSON record per line: a header, one record per draw,
// and an end record whose "complete" flag marks a finished run. Node ids are
// serialized as bit strings, the root as "root".

namespace detail {

inline nlohmann::json vector_json(const Eigen::VectorXd& v) {
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

inline Eigen::VectorXd json_vector(const nlohmann::json& j) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return v;
}

inline nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) out.push_back(vector_json(m.row(r).transpose()));
  return out;
}

inline Eigen::MatrixXd json_matrix(const nlohmann::json& j) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows ? static_cast<Eigen::Index>(j[0].size()) : 0;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  return m;
}

}  // namespace detail

inline nlohmann::json trace_header_json(const PosteriorTrace& trace) {
  nlohmann::json h;
  h["type"] = "header";
  h["tree"] = std::string(to_string(trace.tree));
  h["num_leaves"] = trace.num_leaves;
  std::vector<std::string> leaves, internal;
  for (const auto& l : trace.leaves) leaves.push_back(l.serialize());
  for (const auto& n : trace.internal_nodes) internal.push_back(n.serialize());
  h["leaves"] = leaves;
  h["internal_nodes"] = internal;
  h["profiles"] = nlohmann::json::array();
  for (const auto& p : trace.profiles) h["profiles"].push_back(detail::vector_json(p));
  return h;
}

inline nlohmann::json trace_draw_json(const PosteriorTrace& trace, const TraceDraw& draw) {
  nlohmann::json j;
  j["type"] = "draw";
  j["draw"] = draw.index;
  nlohmann::json gamma = nlohmann::json::object();
  for (std::size_t k = 0; k < draw.coeffs.size(); ++k) {
    gamma[trace.internal_nodes[k].serialize()] = detail::vector_json(draw.coeffs[k]);
  }
  j["gamma"] = std::move(gamma);
  nlohmann::json kernels = nlohmann::json::object();
  for (std::size_t k = 0; k < draw.kernels.size(); ++k) {
    kernels[trace.leaves[k].serialize()] = {{"mean", detail::vector_json(draw.kernels[k].mean())},
                                            {"cov", detail::matrix_json(draw.kernels[k].covariance())}};
  }
  j["kernels"] = std::move(kernels);
  std::vector<std::string> alloc;
  alloc.reserve(draw.allocations.size());
  for (auto a : draw.allocations) alloc.push_back(trace.leaves[a].serialize());
  j["allocations"] = std::move(alloc);
  j["weights"] = draw.weights;
  return j;
}

inline nlohmann::json trace_end_json(const PosteriorTrace& trace) {
  return {{"type", "end"}, {"complete", trace.complete}, {"draws", trace.draws.size()}};
}

/// Sink that appends records to a stream and flushes after each line.
inline TraceSink stream_sink(std::ostream& out) {
  return TraceSink{
      [&out](const PosteriorTrace& t) { out << trace_header_json(t).dump() << '\n' << std::flush; },
      [&out](const PosteriorTrace& t, const TraceDraw& d) { out << trace_draw_json(t, d).dump() << '\n' << std::flush; },
      [&out](const PosteriorTrace& t) { out << trace_end_json(t).dump() << '\n' << std::flush; },
  };
}

inline void write_trace(const PosteriorTrace& trace, std::ostream& out) {
  out << trace_header_json(trace).dump() << '\n';
  for (const auto& d : trace.draws) out << trace_draw_json(trace, d).dump() << '\n';
  out << trace_end_json(trace).dump() << '\n';
}

/// Reads a trace file. A file without an end record (an interrupted run) is
/// returned with complete = false.
inline PosteriorTrace read_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFound("cannot open trace file '" + path.string() + "'");
  PosteriorTrace trace;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  std::optional<TreeTopology> tree;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("malformed trace record: ") + e.what(), line_no);
    }
    try {
      const auto type = j.at("type").get<std::string>();
      if (type == "header") {
        trace.tree = parse_tree_kind(j.at("tree").get<std::string>());
        trace.num_leaves = j.at("num_leaves").get<std::size_t>();
        for (const auto& s : j.at("leaves")) trace.leaves.push_back(NodeId::parse(s.get<std::string>()));
        for (const auto& s : j.at("internal_nodes")) {
          trace.internal_nodes.push_back(NodeId::parse(s.get<std::string>()));
        }
        for (const auto& p : j.at("profiles")) trace.profiles.push_back(detail::json_vector(p));
        tree = TreeTopology::custom(trace.leaves);
        have_header = true;
      } else if (type == "draw") {
        if (!have_header) throw ParseError("draw record before header", line_no);
        std::vector<Eigen::VectorXd> gammas;
        for (const auto& node : trace.internal_nodes) gammas.push_back(detail::json_vector(j.at("gamma").at(node.serialize())));
        const auto dim = gammas.empty() ? (trace.profiles.empty() ? 0 : trace.profiles.front().size()) : gammas.front().size();
        TraceDraw d{j.at("draw").get<std::size_t>(), SplitCoefficientSet(*tree, std::move(gammas), dim), {}, {}, {}};
        for (const auto& leaf : trace.leaves) {
          const auto& k = j.at("kernels").at(leaf.serialize());
          d.kernels.emplace_back(detail::json_vector(k.at("mean")), detail::json_matrix(k.at("cov")));
        }
        for (const auto& a : j.at("allocations")) d.allocations.push_back(tree->leaf_index(NodeId::parse(a.get<std::string>())));
        d.weights = j.at("weights").get<std::vector<WeightVector>>();
        trace.draws.push_back(std::move(d));
      } else if (type == "end") {
        trace.complete = j.at("complete").get<bool>();
      } else {
        throw ParseError("unknown record type '" + type + "'", line_no);
      }
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("bad trace record: ") + e.what(), line_no);
    }
  }
  if (!have_header) throw ValidationError("trace file '" + path.string() + "' has no header");
  return trace;
}

}  // namespace treesb
