#include "mrt/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "mrt/error.hpp"

namespace mrt {

namespace {

void check_pair(const Tensor& pred, const Tensor& truth, std::size_t horizon, const char* what) {
  if (pred.shape() != truth.shape()) {
    throw DimensionError(std::string(what) + ": prediction " + shape_string(pred.shape()) +
                         " vs truth " + shape_string(truth.shape()));
  }
  if (pred.cols() % 3 != 0) throw DimensionError(std::string(what) + ": width is not 3J");
  if (horizon == 0 || horizon > pred.rows()) {
    throw InvalidInput(std::string(what) + ": horizon " + std::to_string(horizon) +
                       " outside 1.." + std::to_string(pred.rows()));
  }
}

double joint_distance(std::span<const double> a, std::span<const double> b, std::size_t j,
                      const double* shift_a = nullptr, const double* shift_b = nullptr) {
  double s = 0.0;
  for (std::size_t c = 0; c < 3; ++c) {
    const double va = a[3 * j + c] - (shift_a ? shift_a[c] : 0.0);
    const double vb = b[3 * j + c] - (shift_b ? shift_b[c] : 0.0);
    s += (va - vb) * (va - vb);
  }
  return std::sqrt(s);
}

}  // namespace

double mpjpe(const Tensor& pred, const Tensor& truth, std::size_t horizon_steps) {
  check_pair(pred, truth, horizon_steps, "mpjpe");
  const std::size_t J = pred.cols() / 3;
  double total = 0.0;
  for (std::size_t t = 0; t < horizon_steps; ++t)
    for (std::size_t j = 0; j < J; ++j) total += joint_distance(pred.row(t), truth.row(t), j);
  return total / static_cast<double>(horizon_steps * J);
}

double root_error(const Tensor& pred, const Tensor& truth, std::size_t horizon_steps,
                  std::size_t root_joint) {
  check_pair(pred, truth, horizon_steps, "root_error");
  if (root_joint >= pred.cols() / 3)
    throw ConfigError("root joint " + std::to_string(root_joint) + " out of range");
  double total = 0.0;
  for (std::size_t t = 0; t < horizon_steps; ++t)
    total += joint_distance(pred.row(t), truth.row(t), root_joint);
  return total / static_cast<double>(horizon_steps);
}

double pose_error(const Tensor& pred, const Tensor& truth, std::size_t horizon_steps,
                  std::size_t root_joint) {
  check_pair(pred, truth, horizon_steps, "pose_error");
  const std::size_t J = pred.cols() / 3;
  if (root_joint >= J) throw ConfigError("root joint " + std::to_string(root_joint) + " out of range");
  double total = 0.0;
  for (std::size_t t = 0; t < horizon_steps; ++t) {
    const auto p = pred.row(t);
    const auto g = truth.row(t);
    const double* pr = p.data() + 3 * root_joint;
    const double* gr = g.data() + 3 * root_joint;
    for (std::size_t j = 0; j < J; ++j) total += joint_distance(p, g, j, pr, gr);
  }
  return total / static_cast<double>(horizon_steps * J);
}

double movement_distance(const Tensor& seq) {
  if (seq.rank() != 2 || seq.rows() < 2)
    throw InvalidInput("movement_distance needs at least 2 steps");
  const std::size_t J = seq.cols() / 3;
  double total = 0.0;
  for (std::size_t j = 0; j < J; ++j)
    total += joint_distance(seq.row(seq.rows() - 1), seq.row(0), j);
  return total / static_cast<double>(J);
}

MetricReport evaluate(std::span<const Scene> predictions, std::span<const Scene> truths,
                      const EvalOptions& options) {
  if (predictions.size() != truths.size()) {
    throw InvalidInput("evaluate: " + std::to_string(predictions.size()) +
                       " predicted scenes vs " + std::to_string(truths.size()) + " truth scenes");
  }
  MetricReport report;
  report.corpus.resize(options.horizons_seconds.size());
  std::vector<std::size_t> counts(options.horizons_seconds.size(), 0);
  for (std::size_t s = 0; s < predictions.size(); ++s) {
    const Scene& pred = predictions[s];
    const Scene& truth = truths[s];
    pred.validate();
    truth.validate();
    if (pred.person_count() != truth.person_count() || pred.steps() != truth.steps() ||
        pred.joints() != truth.joints()) {
      throw InvalidInput("evaluate: scene " + truth.id + " lengths differ: prediction N=" +
                         std::to_string(pred.person_count()) + " T=" + std::to_string(pred.steps()) +
                         " J=" + std::to_string(pred.joints()) + ", truth N=" +
                         std::to_string(truth.person_count()) + " T=" + std::to_string(truth.steps()) +
                         " J=" + std::to_string(truth.joints()));
    }
    SceneMetrics sm{truth.id, truth.person_count(), {}};
    for (std::size_t h = 0; h < options.horizons_seconds.size(); ++h) {
      HorizonMetrics hm;
      hm.seconds = options.horizons_seconds[h];
      hm.steps = static_cast<std::size_t>(std::llround(hm.seconds * truth.frame_rate()));
      hm.available = hm.steps >= 1 && hm.steps <= truth.steps();
      if (hm.available) {
        for (std::size_t n = 0; n < truth.person_count(); ++n) {
          const Tensor& p = pred.persons[n].poses;
          const Tensor& g = truth.persons[n].poses;
          const double e = mpjpe(p, g, hm.steps);
          const double r = root_error(p, g, hm.steps, options.root_joint);
          const double a = pose_error(p, g, hm.steps, options.root_joint);
          hm.mpjpe += e / static_cast<double>(truth.person_count());
          hm.root_error += r / static_cast<double>(truth.person_count());
          hm.pose_error += a / static_cast<double>(truth.person_count());
          report.corpus[h].mpjpe += e;
          report.corpus[h].root_error += r;
          report.corpus[h].pose_error += a;
        }
        counts[h] += truth.person_count();
      }
      sm.horizons.push_back(hm);
    }
    report.persons += truth.person_count();
    report.scenes.push_back(std::move(sm));
  }
  for (std::size_t h = 0; h < report.corpus.size(); ++h) {
    HorizonMetrics& c = report.corpus[h];
    c.seconds = options.horizons_seconds[h];
    c.steps = report.scenes.empty() ? 0 : report.scenes.front().horizons[h].steps;
    c.available = counts[h] > 0;
    if (c.available) {
      const double inv = 1.0 / static_cast<double>(counts[h]);
      c.mpjpe *= inv;
      c.root_error *= inv;
      c.pose_error *= inv;
    }
  }
  return report;
}

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(9) << v;
  return os.str();
}

}  // namespace

void write_report_csv(const std::filesystem::path& path, const MetricReport& report) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write " + path.string());
  // Meters, plus the same values in 0.1 m units for comparison with
  // tables that report decimeters.
  out << "scope,scene,persons,horizon_s,steps,mpjpe_m,root_error_m,pose_error_m,"
         "mpjpe_0.1m,root_error_0.1m,pose_error_0.1m\n";
  auto row = [&](const std::string& scope, const std::string& scene, std::size_t persons,
                 const HorizonMetrics& h) {
    out << scope << ',' << scene << ',' << persons << ',' << fmt(h.seconds) << ',' << h.steps;
    if (!h.available) {
      out << ",,,,,,\n";
      return;
    }
    out << ',' << fmt(h.mpjpe) << ',' << fmt(h.root_error) << ',' << fmt(h.pose_error) << ','
        << fmt(h.mpjpe * 10.0) << ',' << fmt(h.root_error * 10.0) << ','
        << fmt(h.pose_error * 10.0) << '\n';
  };
  for (const auto& h : report.corpus) row("corpus", "", report.persons, h);
  for (const auto& s : report.scenes)
    for (const auto& h : s.horizons) row("scene", s.scene_id, s.persons, h);
}

nlohmann::json report_json(const MetricReport& report) {
  auto horizon = [](const HorizonMetrics& h) {
    nlohmann::json j = {{"horizon_s", h.seconds}, {"steps", h.steps}, {"available", h.available}};
    if (h.available) {
      j["meters"] = {{"mpjpe", h.mpjpe}, {"root_error", h.root_error}, {"pose_error", h.pose_error}};
      j["decimeters"] = {{"mpjpe", h.mpjpe * 10.0},
                         {"root_error", h.root_error * 10.0},
                         {"pose_error", h.pose_error * 10.0}};
    }
    return j;
  };
  nlohmann::json j;
  j["persons"] = report.persons;
  j["corpus"] = nlohmann::json::array();
  for (const auto& h : report.corpus) j["corpus"].push_back(horizon(h));
  j["scenes"] = nlohmann::json::array();
  for (const auto& s : report.scenes) {
    nlohmann::json sj = {{"scene", s.scene_id}, {"persons", s.persons}};
    sj["horizons"] = nlohmann::json::array();
    for (const auto& h : s.horizons) sj["horizons"].push_back(horizon(h));
    j["scenes"].push_back(std::move(sj));
  }
  return j;
}

MovementHistogram movement_histogram(std::span<const double> values, std::string label,
                                     std::size_t bins) {
  if (bins == 0) throw ConfigError("histogram needs at least one bin");
  MovementHistogram h;
  h.label = std::move(label);
  double hi = 0.0;
  for (double v : values) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw InvalidInput("movement values must be finite and >= 0");
    hi = std::max(hi, v);
  }
  if (hi == 0.0) hi = 1e-9;
  h.edges.resize(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i)
    h.edges[i] = hi * static_cast<double>(i) / static_cast<double>(bins);
  h.counts.assign(bins, 0);
  for (double v : values) {
    auto b = static_cast<std::size_t>(v / hi * static_cast<double>(bins));
    h.counts[std::min(b, bins - 1)]++;
  }
  return h;
}

std::vector<double> movement_distances(std::span<const Scene> scenes) {
  std::vector<double> out;
  for (const auto& s : scenes)
    for (const auto& p : s.persons) out.push_back(movement_distance(p.poses));
  return out;
}

void write_histogram_csv(const std::filesystem::path& path, const MovementHistogram& histogram) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write " + path.string());
  out << "# label=" << histogram.label << " bins=" << histogram.counts.size()
      << " policy=uniform over [0, max observed] meters\n";
  out << "bin_left,bin_right,count\n";
  for (std::size_t i = 0; i < histogram.counts.size(); ++i)
    out << fmt(histogram.edges[i]) << ',' << fmt(histogram.edges[i + 1]) << ','
        << histogram.counts[i] << '\n';
}

AttentionTable attention_table(const PredictionChunk& chunk, std::size_t person,
                               std::size_t layer) {
  if (chunk.attention.empty())
    throw UnsupportedOperation("prediction carries no attention records");
  if (layer >= chunk.attention.size()) {
    throw InvalidInput("attention layer " + std::to_string(layer) + " requested, chunk has " +
                       std::to_string(chunk.attention.size()));
  }
  const AttentionRecord& rec = chunk.attention[layer];
  if (rec.heads.empty() || rec.keys.size() != rec.heads.front().cols())
    throw InvalidInput("attention record is missing key labels");
  AttentionTable table;
  table.person = person;
  table.layer = layer;
  table.keys = rec.keys;
  const std::size_t H = rec.heads.size();
  const std::size_t M = rec.keys.size();
  table.raw = Tensor(H, M);
  for (std::size_t h = 0; h < H; ++h) {
    if (rec.heads[h].rows() != 1) throw InvalidInput("decoder attention must have one query row");
    for (std::size_t c = 0; c < M; ++c) table.raw(h, c) = rec.heads[h](0, c);
  }
  table.display = table.raw;
  for (std::size_t h = 0; h < H; ++h) {
    double local = 0.0;
    double global = 0.0;
    for (std::size_t c = 0; c < M; ++c)
      (rec.keys[c].source == TokenLabel::Source::Local ? local : global) += table.raw(h, c);
    for (std::size_t c = 0; c < M; ++c) {
      const double denom = rec.keys[c].source == TokenLabel::Source::Local ? local : global;
      table.display(h, c) = denom > 0.0 ? table.raw(h, c) / denom : 0.0;
    }
  }
  return table;
}

void write_attention_csv(const std::filesystem::path& path, const AttentionTable& table,
                         bool display) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write " + path.string());
  out << "head";
  for (const auto& k : table.keys)
    out << ',' << (k.source == TokenLabel::Source::Local ? "local" : "global") << ':' << k.person
        << ':' << k.time;
  out << '\n';
  const Tensor& m = display ? table.display : table.raw;
  for (std::size_t h = 0; h < m.rows(); ++h) {
    out << h;
    for (std::size_t c = 0; c < m.cols(); ++c) out << ',' << fmt(m(h, c));
    out << '\n';
  }
}

Tensor attention_similarity(std::span<const AttentionTable> tables) {
  const std::size_t n = tables.size();
  if (n == 0) throw InvalidInput("attention_similarity: no tables");
  std::vector<std::vector<double>> vecs(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& t = tables[i];
    for (std::size_t h = 0; h < t.display.rows(); ++h)
      for (std::size_t c = 0; c < t.keys.size(); ++c)
        if (t.keys[c].source == TokenLabel::Source::Global) vecs[i].push_back(t.display(h, c));
    if (vecs[i].size() != vecs[0].size())
      throw InvalidInput("attention_similarity: tables cover different key sets");
  }
  Tensor sim(n, n);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      double dot = 0.0, na = 0.0, nb = 0.0;
      for (std::size_t i = 0; i < vecs[a].size(); ++i) {
        dot += vecs[a][i] * vecs[b][i];
        na += vecs[a][i] * vecs[a][i];
        nb += vecs[b][i] * vecs[b][i];
      }
      sim(a, b) = na > 0.0 && nb > 0.0 ? dot / std::sqrt(na * nb) : 0.0;
    }
  }
  return sim;
}

nlohmann::json attention_records_json(const std::vector<std::vector<PredictionChunk>>& passes) {
  nlohmann::json j;
  j["passes"] = nlohmann::json::array();
  for (const auto& pass : passes) {
    nlohmann::json pj = nlohmann::json::array();
    for (std::size_t n = 0; n < pass.size(); ++n) {
      nlohmann::json person = {{"person", n}, {"layers", nlohmann::json::array()}};
      for (const auto& rec : pass[n].attention) {
        nlohmann::json lj;
        lj["heads"] = nlohmann::json::array();
        for (const auto& h : rec.heads) {
          lj["heads"].push_back(
              std::vector<double>(h.data().begin(), h.data().begin() + static_cast<std::ptrdiff_t>(h.cols())));
        }
        lj["keys"] = nlohmann::json::array();
        for (const auto& k : rec.keys) {
          lj["keys"].push_back({k.source == TokenLabel::Source::Local ? "local" : "global", k.person,
                                k.time});
        }
        person["layers"].push_back(std::move(lj));
      }
      pj.push_back(std::move(person));
    }
    j["passes"].push_back(std::move(pj));
  }
  return j;
}

std::vector<std::vector<PredictionChunk>> attention_records_from_json(const nlohmann::json& j) {
  std::vector<std::vector<PredictionChunk>> passes;
  try {
    for (const auto& pj : j.at("passes")) {
      std::vector<PredictionChunk> pass;
      for (const auto& person : pj) {
        PredictionChunk chunk;
        for (const auto& lj : person.at("layers")) {
          AttentionRecord rec;
          for (const auto& h : lj.at("heads")) {
            auto row = h.get<std::vector<double>>();
            rec.heads.emplace_back(Shape{1, row.size()}, std::move(row));
          }
          for (const auto& k : lj.at("keys")) {
            const auto src = k.at(0).get<std::string>();
            if (src != "local" && src != "global") throw ParseError("unknown key source " + src);
            rec.keys.push_back({src == "local" ? TokenLabel::Source::Local : TokenLabel::Source::Global,
                                k.at(1).get<std::size_t>(), k.at(2).get<std::size_t>()});
          }
          chunk.attention.push_back(std::move(rec));
        }
        pass.push_back(std::move(chunk));
      }
      passes.push_back(std::move(pass));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed attention records: ") + e.what());
  }
  return passes;
}

}  // namespace mrt
