// Copyright 2026 The NIRec Lab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "nirec/evalx.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include <fmt/format.h>

namespace nirec {
namespace {

const SimOracle& RequireOracle(const MethodSuite& suite) {
  if (suite.oracle == nullptr) throw InputError("method suite lacks the oracle");
  return *suite.oracle;
}

template <typename T>
const T& Require(const T* p, std::string_view what) {
  if (p == nullptr) throw InputError(fmt::format("method suite lacks {}", what));
  return *p;
}

std::string XmlEscape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

MetricReport EvaluateAssignment(const SimOracle& oracle, const TargetSpec& spec,
                                const ExperienceContext& ctx,
                                std::span<const std::uint8_t> bits) {
  const OraclePredictor truth(oracle);
  const SteeringProblem problem(truth, spec, ctx);
  if (bits.size() != problem.num_bits()) {
    throw InputError("assignment length does not match the neighbor set");
  }
  MetricReport r;
  const std::size_t n = spec.target_users.size();
  r.before.resize(n);
  r.after.resize(n);
  double sum = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const UserId u = spec.target_users[t];
    r.before[t] = Sigmoid(oracle.Eta(u, spec.target_item));
    r.after[t] = oracle.OutcomeProb(u, spec.target_item,
                                    problem.TargetTreatments(t, bits));
    sum += (r.after[t] - r.before[t]) / r.before[t];
  }
  r.ioip = n > 0 ? sum / static_cast<double>(n) : 0.0;
  r.dtne = TotalCost(ctx, bits);
  return r;
}

double Ioip(const SimOracle& oracle, const TargetSpec& spec,
            const ExperienceContext& ctx, std::span<const std::uint8_t> bits) {
  return EvaluateAssignment(oracle, spec, ctx, bits).ioip;
}

double Dtne(const ExperienceContext& ctx, std::span<const std::uint8_t> bits) {
  return TotalCost(ctx, bits);
}

TreatmentAssignment RunMethod(Method method, const MethodSuite& suite,
                              const TargetSpec& spec,
                              const ExperienceContext& ctx, double gamma) {
  switch (method) {
    case Method::kNIRec: {
      const NIRecPredictor p(Require(suite.nirec, "the NIRec model"));
      return SteeringProblem(p, spec, ctx).Greedy(gamma);
    }
    case Method::kOracle: {
      const OraclePredictor p(RequireOracle(suite));
      return SteeringProblem(p, spec, ctx).Greedy(gamma);
    }
    case Method::kDirectMF:
      return DirectBaseline(Require(suite.mf, "the MF backbone"), spec, ctx, gamma);
    case Method::kDirectLGC:
      return DirectBaseline(Require(suite.lgc, "the LGC backbone"), spec, ctx, gamma);
    case Method::kSimMF:
      return SimBaseline(Require(suite.mf, "the MF backbone"), spec, ctx, gamma,
                         suite.sim_beta, RequireOracle(suite).graph);
    case Method::kSimLGC:
      return SimBaseline(Require(suite.lgc, "the LGC backbone"), spec, ctx, gamma,
                         suite.sim_beta, RequireOracle(suite).graph);
  }
  throw InputError("unknown method");
}

std::vector<CurvePoint> BuildCurve(const MethodSuite& suite,
                                   const TargetSpec& spec,
                                   const ExperienceContext& ctx, Method method,
                                   std::span<const double> gamma_grid) {
  if (gamma_grid.empty()) throw InputError("gamma grid is empty");
  const SimOracle& oracle = RequireOracle(suite);
  std::vector<CurvePoint> out;
  out.reserve(gamma_grid.size());
  for (double g : gamma_grid) {
    TreatmentAssignment a = RunMethod(method, suite, spec, ctx, g);
    const MetricReport m = EvaluateAssignment(oracle, spec, ctx, a.bits);
    out.push_back({g, m.ioip, m.dtne, method, std::move(a.bits), a.breakdown,
                   a.evaluations});
  }
  return out;
}

double NegativeImpactClosedForm(const SimOracle& oracle, UserId u,
                                const TargetSpec& spec) {
  if (!std::binary_search(spec.target_users.begin(), spec.target_users.end(), u)) {
    throw InputError(fmt::format("user {} is not in the target group", u));
  }
  double impact = 0.0;
  for (UserId v : oracle.graph->Followers(u)) {
    if (v == u ||
        !std::binary_search(spec.target_users.begin(), spec.target_users.end(), v)) {
      continue;
    }
    impact += std::min(0.0, oracle.NeighborContribution(v, u, spec.target_item));
  }
  return impact;
}

double NegativeImpactMarginal(const OutcomePredictor& predictor, UserId u,
                              const TargetSpec& spec,
                              std::span<const std::uint8_t> bits) {
  const auto& group = spec.target_users;
  if (!std::binary_search(group.begin(), group.end(), u)) {
    throw InputError(fmt::format("user {} is not in the target group", u));
  }
  if (bits.size() != spec.neighbor_users.size()) {
    throw InputError("assignment length does not match the neighbor set");
  }
  const auto& graph = predictor.graph();
  double impact = 0.0;
  for (UserId v : graph.Followers(u)) {
    if (!std::binary_search(group.begin(), group.end(), v)) continue;
    const auto nbrs = graph.Neighbors(v);
    std::vector<std::uint8_t> treat(nbrs.size());
    std::size_t pos_u = nbrs.size();
    for (std::size_t p = 0; p < nbrs.size(); ++p) {
      const UserId w = nbrs[p];
      if (w == u) pos_u = p;
      if (std::binary_search(group.begin(), group.end(), w)) {
        treat[p] = 1;
      } else if (auto it = std::lower_bound(spec.neighbor_users.begin(),
                                            spec.neighbor_users.end(), w);
                 it != spec.neighbor_users.end() && *it == w) {
        treat[p] = bits[static_cast<std::size_t>(it - spec.neighbor_users.begin())];
      }
    }
    treat[pos_u] = 1;
    const double with = predictor.Predict(v, spec.target_item, treat);
    treat[pos_u] = 0;
    const double without = predictor.Predict(v, spec.target_item, treat);
    impact += std::min(0.0, with - without);
  }
  return impact;
}

GroupAdjustment AdjustGroup(const SocialGraph& graph, const TargetSpec& spec,
                            AdjustStrategy strategy, std::size_t n_remove,
                            std::uint64_t seed, const ImpactScorer& scorer) {
  const auto& group = spec.target_users;
  if (n_remove >= group.size() && n_remove > 0) {
    throw InputError(fmt::format("cannot select {} of {} target users", n_remove,
                                 group.size()));
  }
  GroupAdjustment adj;
  adj.strategy = strategy;
  if (strategy == AdjustStrategy::kHighestNegativeImpact) {
    if (!scorer) throw InputError("impact strategy needs a scorer");
    adj.impacts.reserve(group.size());
    for (UserId u : group) adj.impacts.push_back(scorer(u));
    std::vector<std::size_t> order(group.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return adj.impacts[a] < adj.impacts[b];
    });
    for (std::size_t k = 0; k < n_remove; ++k) adj.selected.push_back(group[order[k]]);
  } else {
    Rng rng(seed);
    std::vector<UserId> pool(group.begin(), group.end());
    std::shuffle(pool.begin(), pool.end(), rng);
    adj.selected.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_remove));
  }
  std::sort(adj.selected.begin(), adj.selected.end());
  for (UserId u : adj.selected) {
    for (UserId v : graph.Followers(u)) {
      if (v != u && std::binary_search(group.begin(), group.end(), v)) {
        adj.cut_edges.emplace_back(v, u);
      }
    }
  }
  std::sort(adj.cut_edges.begin(), adj.cut_edges.end());
  adj.adjusted_graph =
      std::make_shared<const SocialGraph>(graph.WithoutEdges(adj.cut_edges));
  adj.adjusted_spec = spec;
  adj.adjusted_spec.neighbor_users = NeighborUnion(*adj.adjusted_graph, group);
  return adj;
}

std::vector<AggregateRow> Aggregate(std::span<const MetricRow> rows) {
  if (rows.empty()) throw InputError("nothing to aggregate");
  std::map<CellKey, std::vector<const MetricRow*>> cells;
  for (const auto& r : rows) cells[r.key].push_back(&r);
  std::vector<AggregateRow> out;
  out.reserve(cells.size());
  for (const auto& [key, members] : cells) {
    AggregateRow a;
    a.key = key;
    a.n_specs = members.size();
    const double n = static_cast<double>(members.size());
    for (const auto* m : members) {
      a.ioip_mean += m->ioip;
      a.dtne_mean += m->dtne;
    }
    a.ioip_mean /= n;
    a.dtne_mean /= n;
    if (members.size() > 1) {
      double vi = 0.0, vd = 0.0;
      for (const auto* m : members) {
        vi += (m->ioip - a.ioip_mean) * (m->ioip - a.ioip_mean);
        vd += (m->dtne - a.dtne_mean) * (m->dtne - a.dtne_mean);
      }
      a.ioip_se = std::sqrt(vi / (n - 1)) / std::sqrt(n);
      a.dtne_se = std::sqrt(vd / (n - 1)) / std::sqrt(n);
    }
    out.push_back(std::move(a));
  }
  return out;
}

std::string CurveCsvHeader() {
  return "method,gamma,group_size,beta,t,ioip_mean,ioip_se,dtne_mean,dtne_se,n_specs";
}

std::string CurveCsv(std::span<const AggregateRow> rows) {
  std::string out = CurveCsvHeader() + "\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{},{},{},{},{},{},{},{},{}\n", r.key.method,
                       r.key.gamma, r.key.group_size, r.key.beta,
                       r.key.threshold, r.ioip_mean, r.ioip_se, r.dtne_mean,
                       r.dtne_se, r.n_specs);
  }
  return out;
}

std::vector<AggregateRow> ParseCurveCsv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<AggregateRow> out;
  if (!std::getline(in, line) || line != CurveCsvHeader()) {
    throw InputError("curve CSV header mismatch");
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 10) throw InputError(fmt::format("bad curve row '{}'", line));
    AggregateRow r;
    try {
      r.key = {f[0], std::stod(f[1]), std::stoi(f[2]), std::stod(f[3]),
               std::stod(f[4])};
      r.ioip_mean = std::stod(f[5]);
      r.ioip_se = std::stod(f[6]);
      r.dtne_mean = std::stod(f[7]);
      r.dtne_se = std::stod(f[8]);
      r.n_specs = static_cast<std::size_t>(std::stoul(f[9]));
    } catch (const std::exception&) {
      throw InputError(fmt::format("bad curve row '{}'", line));
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::string RenderCurveSvg(std::span<const AggregateRow> rows,
                           const std::string& title) {
  constexpr double kW = 640, kH = 420, kL = 70, kR = 150, kT = 40, kB = 50;
  std::map<std::string, std::vector<std::pair<double, double>>> series;
  double xmax = 0.0, ymin = 0.0, ymax = 0.0;
  bool first = true;
  for (const auto& r : rows) {
    series[r.key.method].emplace_back(r.dtne_mean, r.ioip_mean);
    xmax = std::max(xmax, r.dtne_mean);
    if (first) {
      ymin = ymax = r.ioip_mean;
      first = false;
    }
    ymin = std::min(ymin, r.ioip_mean);
    ymax = std::max(ymax, r.ioip_mean);
  }
  if (xmax <= 0) xmax = 1.0;
  if (ymax - ymin < 1e-9) {
    ymin -= 0.05;
    ymax += 0.05;
  }
  const double pad = 0.05 * (ymax - ymin);
  ymin -= pad;
  ymax += pad;
  const double pw = kW - kL - kR, ph = kH - kT - kB;
  const auto sx = [&](double x) { return kL + pw * x / xmax; };
  const auto sy = [&](double y) { return kT + ph * (1.0 - (y - ymin) / (ymax - ymin)); };

  static constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c",
                                            "#ff7f0e", "#9467bd", "#8c564b"};
  std::string svg = fmt::format(
      "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" "
      "viewBox=\"0 0 {0} {1}\">\n"
      "<rect width=\"{0}\" height=\"{1}\" fill=\"white\"/>\n"
      "<text x=\"{2}\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">{3}</text>\n",
      kW, kH, kL, XmlEscape(title));
  svg += fmt::format(
      "<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"black\"/>\n"
      "<line x1=\"{0}\" y1=\"{3}\" x2=\"{0}\" y2=\"{1}\" stroke=\"black\"/>\n",
      kL, kT + ph, kL + pw, kT);
  for (int k = 0; k <= 4; ++k) {
    const double xv = xmax * k / 4.0;
    const double yv = ymin + (ymax - ymin) * k / 4.0;
    svg += fmt::format(
        "<text x=\"{:.1f}\" y=\"{:.1f}\" font-family=\"sans-serif\" "
        "font-size=\"10\" text-anchor=\"middle\">{:.3g}</text>\n",
        sx(xv), kT + ph + 15, xv);
    svg += fmt::format(
        "<text x=\"{:.1f}\" y=\"{:.1f}\" font-family=\"sans-serif\" "
        "font-size=\"10\" text-anchor=\"end\">{:.3g}</text>\n",
        kL - 5, sy(yv) + 3, yv);
  }
  svg += fmt::format(
      "<text x=\"{:.1f}\" y=\"{:.1f}\" font-family=\"sans-serif\" "
      "font-size=\"12\" text-anchor=\"middle\">DtNE</text>\n",
      kL + pw / 2, kH - 12);
  svg += fmt::format(
      "<text x=\"16\" y=\"{:.1f}\" font-family=\"sans-serif\" font-size=\"12\" "
      "transform=\"rotate(-90 16 {:.1f})\" text-anchor=\"middle\">IoIP</text>\n",
      kT + ph / 2, kT + ph / 2);

  std::size_t s = 0;
  for (auto& [method, pts] : series) {
    std::stable_sort(pts.begin(), pts.end());
    const char* color = kColors[s % std::size(kColors)];
    std::string path;
    for (const auto& [x, y] : pts) path += fmt::format("{:.2f},{:.2f} ", sx(x), sy(y));
    if (!path.empty()) path.pop_back();
    svg += fmt::format(
        "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
        color, path);
    for (const auto& [x, y] : pts) {
      svg += fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"2.5\" fill=\"{}\"/>\n",
                         sx(x), sy(y), color);
    }
    const double ly = kT + 16.0 * static_cast<double>(s);
    svg += fmt::format(
        "<line x1=\"{0:.1f}\" y1=\"{1:.1f}\" x2=\"{2:.1f}\" y2=\"{1:.1f}\" "
        "stroke=\"{3}\" stroke-width=\"2\"/>\n"
        "<text x=\"{4:.1f}\" y=\"{5:.1f}\" font-family=\"sans-serif\" "
        "font-size=\"11\">{6}</text>\n",
        kL + pw + 12, ly, kL + pw + 32, color, kL + pw + 38, ly + 4,
        XmlEscape(method));
    ++s;
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace nirec
