#include "sa/config.hpp"

#include <charconv>
#include <map>
#include <sstream>

namespace sa {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

struct RawEntry {
  std::string value;
  int line = 0;
  mutable bool consumed = false;
};

struct RawConfig {
  // section -> key -> entry
  std::map<std::string, std::map<std::string, RawEntry>> sections;
};

RawConfig tokenize(const std::string& text) {
  RawConfig raw;
  std::string section;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError(lineno, "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) throw ParseError(lineno, "empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(lineno, "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ParseError(lineno, "empty key");
    if (section.empty()) throw ParseError(lineno, "key outside any [section]");
    if (raw.sections[section].count(key)) throw ParseError(lineno, "duplicate key '" + key + "'");
    raw.sections[section][key] = RawEntry{value, lineno, false};
  }
  return raw;
}

class SectionReader {
 public:
  SectionReader(const RawConfig& raw, std::string name) : name_(std::move(name)) {
    const auto it = raw.sections.find(name_);
    if (it != raw.sections.end()) entries_ = &it->second;
  }

  bool present() const { return entries_ != nullptr; }

  const RawEntry* find(const std::string& key) const {
    if (!entries_) return nullptr;
    const auto it = entries_->find(key);
    if (it == entries_->end()) return nullptr;
    it->second.consumed = true;
    return &it->second;
  }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    const auto* e = find(key);
    return e ? e->value : fallback;
  }

  std::string require_string(const std::string& key) const {
    const auto* e = find(key);
    if (!e) throw ParseError(0, "[" + name_ + "] missing required key '" + key + "'");
    return e->value;
  }

  double get_double(const std::string& key, double fallback) const {
    const auto* e = find(key);
    if (!e) return fallback;
    return parse_double(*e, key);
  }

  std::int64_t get_int(const std::string& key, std::int64_t fallback) const {
    const auto* e = find(key);
    if (!e) return fallback;
    return parse_int(*e, key);
  }

  bool get_bool(const std::string& key, bool fallback) const {
    const auto* e = find(key);
    if (!e) return fallback;
    if (e->value == "true" || e->value == "1") return true;
    if (e->value == "false" || e->value == "0") return false;
    throw ParseError(e->line, "key '" + key + "' expects true/false");
  }

  std::optional<double> get_optional_double(const std::string& key) const {
    const auto* e = find(key);
    if (!e) return std::nullopt;
    return parse_double(*e, key);
  }

  std::vector<double> get_double_list(const std::string& key, std::vector<double> fallback) const {
    const auto* e = find(key);
    if (!e) return fallback;
    return parse_double_list(*e, key);
  }

  std::vector<std::int64_t> get_int_list(const std::string& key) const {
    const auto* e = find(key);
    if (!e) return {};
    std::vector<std::int64_t> out;
    for (double v : parse_double_list(*e, key)) out.push_back(static_cast<std::int64_t>(v));
    return out;
  }

  std::optional<Matrix> get_matrix(const std::string& key) const {
    const auto* e = find(key);
    if (!e) return std::nullopt;
    std::vector<std::vector<double>> rows;
    std::istringstream in(e->value);
    std::string row_text;
    while (std::getline(in, row_text, ';')) {
      RawEntry row_entry{row_text, e->line, false};
      rows.push_back(parse_double_list(row_entry, key));
      if (rows.back().size() != rows.front().size())
        throw ParseError(e->line, "ragged matrix for key '" + key + "'");
    }
    if (rows.empty()) throw ParseError(e->line, "empty matrix for key '" + key + "'");
    Matrix m(rows.size(), rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < rows[i].size(); ++j)
        m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    return m;
  }

 private:
  static double parse_double(const RawEntry& e, const std::string& key) {
    try {
      std::size_t used = 0;
      const double v = std::stod(e.value, &used);
      if (used != e.value.size()) throw std::invalid_argument("");
      return v;
    } catch (...) {
      throw ParseError(e.line, "key '" + key + "' expects a number, got '" + e.value + "'");
    }
  }
  static std::int64_t parse_int(const RawEntry& e, const std::string& key) {
    try {
      std::size_t used = 0;
      const long long v = std::stoll(e.value, &used);
      if (used != e.value.size()) throw std::invalid_argument("");
      return v;
    } catch (...) {
      throw ParseError(e.line, "key '" + key + "' expects an integer, got '" + e.value + "'");
    }
  }
  static std::vector<double> parse_double_list(const RawEntry& e, const std::string& key) {
    std::vector<double> out;
    std::istringstream in(e.value);
    std::string item;
    while (std::getline(in, item, ',')) {
      RawEntry tmp{trim(item), e.line, false};
      if (tmp.value.empty()) throw ParseError(e.line, "empty list item for key '" + key + "'");
      out.push_back(parse_double(tmp, key));
    }
    if (out.empty()) throw ParseError(e.line, "key '" + key + "' expects a non-empty list");
    return out;
  }

  std::string name_;
  const std::map<std::string, RawEntry>* entries_ = nullptr;
};

void fail_on_unconsumed(const RawConfig& raw) {
  static const std::map<std::string, bool> known_sections = {
      {"problem", true}, {"algorithm", true}, {"output", true}, {"checks", true}};
  for (const auto& [section, entries] : raw.sections) {
    if (!known_sections.count(section)) {
      throw ParseError(entries.begin()->second.line, "unknown section [" + section + "]");
    }
    for (const auto& [key, entry] : entries)
      if (!entry.consumed) throw ParseError(entry.line, "unknown key '" + key + "' in [" + section + "]");
  }
}

void validate_semantics(const ExperimentConfig& c) {
  auto fail = [](const std::string& msg) { throw ParseError(0, msg); };
  if (c.problem_type != "sgd" && c.problem_type != "em" && c.problem_type != "td" &&
      c.problem_type != "spider")
    fail("problem type must be sgd|em|td|spider");
  if (c.n < 1) fail("n must be >= 1");
  if (c.horizons.empty()) fail("T must list at least one horizon");
  for (auto t : c.horizons)
    if (t < 1) fail("every horizon must be >= 1");
  if (c.replications < 1) fail("replications (seeds) must be >= 1");
  static const char* kSchedules[] = {"constant",   "horizon",    "poly",    "sqrt_t",
                                     "poly_tuned", "td_horizon", "td_poly", "half_gamma_max"};
  bool sched_ok = false;
  for (const char* s : kSchedules) sched_ok = sched_ok || c.schedule == s;
  if (!sched_ok) fail("unknown schedule '" + c.schedule + "'");
  if (c.problem_type == "spider") {
    // spider steps come from spider.step; the schedule section is unused
    if (c.spider_step != "tuned") {
      try {
        if (!(std::stod(c.spider_step) > 0.0)) fail("spider.step must be > 0");
      } catch (const std::invalid_argument&) {
        fail("spider.step must be 'tuned' or a positive number");
      }
    }
  } else {
    if ((c.schedule == "constant" || c.schedule == "sqrt_t") && !(c.gamma > 0.0))
      fail("gamma must be > 0");
    if (c.schedule == "poly" && !(c.gamma_tilde > 0.0)) fail("gamma_tilde must be > 0");
    if (c.schedule == "poly" && (c.beta <= 0.0 || c.beta > 1.0)) fail("beta must be in (0,1]");
  }
  if (c.batch < 1) fail("batch must be >= 1");
  if (c.mc_samples < 1) fail("m must be >= 1");
  if (c.log_stride < 0) fail("log_stride must be >= 0 (0 = auto)");
  if (c.stopping != "last" && c.stopping != "random" && c.stopping != "average")
    fail("stopping must be last|random|average");
  if (c.statistic != "mean_w" && c.statistic != "last_w" && c.statistic != "avg_iterate_w" &&
      c.statistic != "last_v2")
    fail("statistic must be mean_w|last_w|avg_iterate_w|last_v2");
  if (c.bound != "none" && c.bound != "running_avg" && c.bound != "tuned_step" && c.bound != "poly_last" &&
      c.bound != "td_robust" && c.bound != "td_fast" && c.bound != "vr_tuned" && c.bound != "lowprec")
    fail("bound must be none|running_avg|tuned_step|poly_last|td_robust|td_fast|vr_tuned|lowprec");
  if (c.placement != "field" && c.placement != "perturbed" && c.placement != "lowprec")
    fail("placement must be field|perturbed|lowprec");
  if (c.problem_type == "em" &&
      (c.em_oracle != "minibatch" && c.em_oracle != "saem_es" && c.em_oracle != "saem_is" &&
       c.em_oracle != "full"))
    fail("em oracle must be full|minibatch|saem_es|saem_is");
  if (c.problem_type == "td" && !(c.td_lambda > 0.0 && c.td_lambda < 1.0))
    fail("lambda must be in (0,1)");
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  const RawConfig raw = tokenize(text);
  ExperimentConfig c;

  SectionReader problem(raw, "problem");
  if (!problem.present()) throw ParseError(0, "missing [problem] section");
  c.problem_type = problem.require_string("type");
  c.n = problem.get_int("n", 0);
  c.d = problem.get_int("d", 0);
  c.instance_seed = static_cast<std::uint64_t>(problem.get_int("instance_seed", 1));
  if (c.problem_type == "sgd" || c.problem_type == "spider")
    c.sgd_regime = problem.get_string("regime", "nonconvex");
  if (c.problem_type == "td") {
    c.td_lambda = problem.get_double("lambda", 0.5);
    c.td_features = problem.get_string("features", "random");
    c.td_p = problem.get_matrix("P");
    c.td_r = problem.get_matrix("R");
    c.td_phi = problem.get_matrix("Phi");
  }
  if (c.problem_type == "em") {
    c.em_components = problem.get_int("k", 2);
    c.em_oracle = problem.get_string("oracle", "minibatch");
    c.em_true_means = problem.get_double_list("true_means", {});
    c.em_weights = problem.get_double_list("weights", {});
    if (const auto* e = problem.find("data")) {
      std::vector<double> data;
      std::istringstream in(e->value);
      std::string item;
      while (std::getline(in, item, ',')) data.push_back(std::stod(item));
      c.em_data = std::move(data);
    }
  }

  SectionReader algorithm(raw, "algorithm");
  if (!algorithm.present()) throw ParseError(0, "missing [algorithm] section");
  c.horizons = algorithm.get_int_list("T");
  c.schedule = algorithm.get_string("schedule", "constant");
  c.gamma = algorithm.get_double("gamma", 0.0);
  c.gamma_tilde = algorithm.get_double("gamma_tilde", 0.0);
  c.t0 = algorithm.get_int("t0", 0);
  c.beta = algorithm.get_double("beta", 1.0);
  c.batch = algorithm.get_int("batch", 1);
  c.mc_samples = algorithm.get_int("m", 1);
  c.stopping = algorithm.get_string("stopping", "last");
  c.replications = algorithm.get_int("seeds", 1);
  c.master_seed = static_cast<std::uint64_t>(algorithm.get_int("master_seed", 0));
  c.compressor = algorithm.get_string("compressor", "");
  c.placement = algorithm.get_string("placement", "field");
  c.spider_k_in = algorithm.get_int("spider.k_in", 0);
  c.spider_b = algorithm.get_int("spider.b_vr", 0);
  c.spider_step = algorithm.get_string("spider.step", "tuned");
  (void)algorithm.get_int("spider.k_out", 0);  // derived from T; accepted for compatibility

  SectionReader output(raw, "output");
  if (output.present()) {
    c.log_stride = output.get_int("log_stride", 1);
    c.write_trajectories = output.get_bool("write_trajectories", true);
    c.bound = output.get_string("bound", "none");
    c.statistic = output.get_string("statistic", "mean_w");
  }

  SectionReader checks(raw, "checks");
  if (checks.present()) {
    c.check_bound = checks.get_bool("bound", false);
    c.slope_min = checks.get_optional_double("slope_min");
    c.slope_max = checks.get_optional_double("slope_max");
    c.final_max = checks.get_optional_double("final_max");
  }

  fail_on_unconsumed(raw);
  validate_semantics(c);
  return c;
}

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string format_list(const std::vector<double>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ",";
    out += format_double(xs[i]);
  }
  return out;
}

std::string format_matrix(const Matrix& m) {
  std::string out;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    if (i) out += ";";
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out += ",";
      out += format_double(m(i, j));
    }
  }
  return out;
}

}  // namespace

std::string serialize_config(const ExperimentConfig& c) {
  std::ostringstream out;
  out << "[problem]\n";
  out << "type = " << c.problem_type << "\n";
  out << "n = " << c.n << "\n";
  if (c.d > 0) out << "d = " << c.d << "\n";
  out << "instance_seed = " << c.instance_seed << "\n";
  if (c.problem_type == "sgd" || c.problem_type == "spider") out << "regime = " << c.sgd_regime << "\n";
  if (c.problem_type == "td") {
    out << "lambda = " << format_double(c.td_lambda) << "\n";
    out << "features = " << c.td_features << "\n";
    if (c.td_p) out << "P = " << format_matrix(*c.td_p) << "\n";
    if (c.td_r) out << "R = " << format_matrix(*c.td_r) << "\n";
    if (c.td_phi) out << "Phi = " << format_matrix(*c.td_phi) << "\n";
  }
  if (c.problem_type == "em") {
    out << "k = " << c.em_components << "\n";
    out << "oracle = " << c.em_oracle << "\n";
    if (!c.em_true_means.empty()) out << "true_means = " << format_list(c.em_true_means) << "\n";
    if (!c.em_weights.empty()) out << "weights = " << format_list(c.em_weights) << "\n";
    if (c.em_data) out << "data = " << format_list(*c.em_data) << "\n";
  }

  out << "\n[algorithm]\n";
  out << "T = ";
  for (std::size_t i = 0; i < c.horizons.size(); ++i) out << (i ? "," : "") << c.horizons[i];
  out << "\n";
  out << "schedule = " << c.schedule << "\n";
  if (c.gamma > 0.0) out << "gamma = " << format_double(c.gamma) << "\n";
  if (c.gamma_tilde > 0.0) out << "gamma_tilde = " << format_double(c.gamma_tilde) << "\n";
  if (c.t0 > 0) out << "t0 = " << c.t0 << "\n";
  if (c.beta != 1.0) out << "beta = " << format_double(c.beta) << "\n";
  out << "batch = " << c.batch << "\n";
  if (c.problem_type == "em") out << "m = " << c.mc_samples << "\n";
  out << "stopping = " << c.stopping << "\n";
  out << "seeds = " << c.replications << "\n";
  out << "master_seed = " << c.master_seed << "\n";
  if (!c.compressor.empty()) {
    out << "compressor = " << c.compressor << "\n";
    out << "placement = " << c.placement << "\n";
  }
  if (c.problem_type == "spider") {
    if (c.spider_k_in > 0) out << "spider.k_in = " << c.spider_k_in << "\n";
    if (c.spider_b > 0) out << "spider.b_vr = " << c.spider_b << "\n";
    out << "spider.step = " << c.spider_step << "\n";
  }

  out << "\n[output]\n";
  out << "log_stride = " << c.log_stride << "\n";
  out << "write_trajectories = " << (c.write_trajectories ? "true" : "false") << "\n";
  out << "bound = " << c.bound << "\n";
  out << "statistic = " << c.statistic << "\n";

  out << "\n[checks]\n";
  out << "bound = " << (c.check_bound ? "true" : "false") << "\n";
  if (c.slope_min) out << "slope_min = " << format_double(*c.slope_min) << "\n";
  if (c.slope_max) out << "slope_max = " << format_double(*c.slope_max) << "\n";
  if (c.final_max) out << "final_max = " << format_double(*c.final_max) << "\n";
  return out.str();
}

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
  auto mat_eq = [](const std::optional<Matrix>& x, const std::optional<Matrix>& y) {
    if (x.has_value() != y.has_value()) return false;
    if (!x) return true;
    return x->rows() == y->rows() && x->cols() == y->cols() && *x == *y;
  };
  return a.problem_type == b.problem_type && a.n == b.n && a.d == b.d &&
         a.instance_seed == b.instance_seed && a.sgd_regime == b.sgd_regime &&
         a.td_lambda == b.td_lambda && a.td_features == b.td_features && mat_eq(a.td_p, b.td_p) &&
         mat_eq(a.td_r, b.td_r) && mat_eq(a.td_phi, b.td_phi) && a.em_components == b.em_components &&
         a.em_true_means == b.em_true_means && a.em_weights == b.em_weights && a.em_data == b.em_data &&
         a.em_oracle == b.em_oracle && a.horizons == b.horizons && a.schedule == b.schedule &&
         a.gamma == b.gamma && a.gamma_tilde == b.gamma_tilde && a.t0 == b.t0 && a.beta == b.beta &&
         a.batch == b.batch && a.mc_samples == b.mc_samples && a.stopping == b.stopping &&
         a.replications == b.replications && a.master_seed == b.master_seed &&
         a.compressor == b.compressor && a.placement == b.placement &&
         a.spider_k_in == b.spider_k_in &&
         a.spider_b == b.spider_b && a.spider_step == b.spider_step && a.log_stride == b.log_stride &&
         a.write_trajectories == b.write_trajectories && a.bound == b.bound &&
         a.statistic == b.statistic && a.check_bound == b.check_bound && a.slope_min == b.slope_min &&
         a.slope_max == b.slope_max && a.final_max == b.final_max;
}

}  // namespace sa
