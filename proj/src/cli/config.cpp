#include "busoff/cli/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

namespace busoff::cli {
namespace {

std::string join_path(const std::string& parent, std::string_view key) {
  return parent.empty() ? std::string(key) : parent + "." + std::string(key);
}

std::string type_name(const Json& j) { return j.type_name(); }

/// Reads one config object, records the resolved values into `dst` and
/// remembers which keys were consumed so leftovers can be rejected.
class Section {
 public:
  Section(const Json* src, Json& dst, std::string path)
      : src_(src), dst_(dst), path_(std::move(path)) {
    if (src_ && src_->is_null()) src_ = nullptr;
    if (src_ && !src_->is_object()) {
      throw ConfigError(path_.empty() ? "<root>" : path_,
                        "expected an object, got " + type_name(*src_));
    }
    if (!dst_.is_object()) dst_ = Json::object();
  }

  bool has(std::string_view key) const {
    return src_ && src_->contains(std::string(key)) &&
           !(*src_)[std::string(key)].is_null();
  }

  std::string key(std::string_view k) const { return join_path(path_, k); }

  double number(std::string_view k, std::optional<double> def) {
    const Json* v = get(k);
    double out = 0.0;
    if (!v) {
      if (!def) throw ConfigError(key(k), "required");
      out = *def;
    } else {
      out = as_number(*v, key(k));
    }
    dst_[std::string(k)] = out;
    return out;
  }

  std::optional<double> optional_number(std::string_view k) {
    const Json* v = get(k);
    if (!v) {
      dst_[std::string(k)] = nullptr;
      return std::nullopt;
    }
    const double out = as_number(*v, key(k));
    dst_[std::string(k)] = out;
    return out;
  }

  long long integer(std::string_view k, std::optional<long long> def) {
    const Json* v = get(k);
    long long out = 0;
    if (!v) {
      if (!def) throw ConfigError(key(k), "required");
      out = *def;
    } else {
      out = as_integer(*v, key(k));
    }
    dst_[std::string(k)] = out;
    return out;
  }

  std::optional<long long> optional_integer(std::string_view k) {
    const Json* v = get(k);
    if (!v) {
      dst_[std::string(k)] = nullptr;
      return std::nullopt;
    }
    const long long out = as_integer(*v, key(k));
    dst_[std::string(k)] = out;
    return out;
  }

  std::uint64_t unsigned_integer(std::string_view k, std::uint64_t def) {
    const Json* v = get(k);
    std::uint64_t out = def;
    if (v) {
      if (v->is_number_unsigned()) {
        out = v->get<std::uint64_t>();
      } else {
        const long long s = as_integer(*v, key(k));
        if (s < 0) throw ConfigError(key(k), "must be nonnegative");
        out = static_cast<std::uint64_t>(s);
      }
    }
    dst_[std::string(k)] = out;
    return out;
  }

  bool boolean(std::string_view k, bool def) {
    const Json* v = get(k);
    bool out = def;
    if (v) {
      if (!v->is_boolean()) {
        throw ConfigError(key(k), "expected true or false, got " +
                                      type_name(*v));
      }
      out = v->get<bool>();
    }
    dst_[std::string(k)] = out;
    return out;
  }

  std::string string(std::string_view k, std::string def,
                     std::initializer_list<std::string_view> allowed) {
    const Json* v = get(k);
    std::string out = std::move(def);
    if (v) {
      if (!v->is_string()) {
        throw ConfigError(key(k), "expected a string, got " + type_name(*v));
      }
      out = v->get<std::string>();
    }
    if (allowed.size() &&
        std::find(allowed.begin(), allowed.end(), out) == allowed.end()) {
      std::string list;
      for (auto a : allowed) list += (list.empty() ? "" : ", ") + std::string(a);
      throw ConfigError(key(k), "'" + out + "' is not one of: " + list);
    }
    dst_[std::string(k)] = out;
    return out;
  }

  Eigen::MatrixXd matrix(std::string_view k,
                         std::optional<Eigen::MatrixXd> def) {
    const Json* v = get(k);
    Eigen::MatrixXd out;
    if (!v) {
      if (!def) throw ConfigError(key(k), "required");
      out = *def;
    } else {
      out = as_matrix(*v, key(k));
    }
    dst_[std::string(k)] = matrix_to_json(out);
    return out;
  }

  Eigen::VectorXd vector(std::string_view k,
                         std::optional<Eigen::VectorXd> def) {
    const Json* v = get(k);
    Eigen::VectorXd out;
    if (!v) {
      if (!def) throw ConfigError(key(k), "required");
      out = *def;
    } else {
      out = as_vector(*v, key(k));
    }
    dst_[std::string(k)] = std::vector<double>(out.data(), out.data() + out.size());
    return out;
  }

  std::optional<std::vector<double>> optional_list(std::string_view k) {
    const Json* v = get(k);
    if (!v) {
      dst_[std::string(k)] = nullptr;
      return std::nullopt;
    }
    const Eigen::VectorXd vec = as_vector(*v, key(k));
    std::vector<double> out(vec.data(), vec.data() + vec.size());
    dst_[std::string(k)] = out;
    return out;
  }

  /// Marks a key as not applicable; fails if the user set it.
  void forbid(std::string_view k, const std::string& why) {
    seen_.insert(std::string(k));
    if (has(k)) throw ConfigError(key(k), why);
  }

  Section child(std::string_view k) {
    const Json* v = get(k);
    Json& d = dst_[std::string(k)];
    return Section(v, d, key(k));
  }

  void finish() const {
    if (!src_) return;
    for (const auto& item : src_->items()) {
      if (!seen_.count(item.key())) {
        throw ConfigError(key(item.key()), "unknown key");
      }
    }
  }

 private:
  const Json* get(std::string_view k) {
    seen_.insert(std::string(k));
    if (!has(k)) return nullptr;
    return &(*src_)[std::string(k)];
  }

  static double as_number(const Json& v, const std::string& key) {
    if (!v.is_number()) {
      throw ConfigError(key, "expected a number, got " + type_name(v));
    }
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw ConfigError(key, "must be finite");
    return d;
  }

  static long long as_integer(const Json& v, const std::string& key) {
    if (v.is_number_integer()) return v.get<long long>();
    if (v.is_number_float()) {
      const double d = v.get<double>();
      if (std::isfinite(d) && d == std::floor(d) && std::abs(d) < 9e15) {
        return static_cast<long long>(d);
      }
    }
    throw ConfigError(key, "expected an integer, got " + v.dump());
  }

  static Eigen::VectorXd as_vector(const Json& v, const std::string& key) {
    if (v.is_number()) return Eigen::VectorXd::Constant(1, as_number(v, key));
    if (!v.is_array() || v.empty()) {
      throw ConfigError(key, "expected a nonempty array of numbers");
    }
    Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) {
      out(static_cast<Eigen::Index>(i)) =
          as_number(v[i], key + "[" + std::to_string(i) + "]");
    }
    return out;
  }

  static Eigen::MatrixXd as_matrix(const Json& v, const std::string& key) {
    if (v.is_number()) return Eigen::MatrixXd::Constant(1, 1, as_number(v, key));
    if (!v.is_array() || v.empty() || !v[0].is_array() || v[0].empty()) {
      throw ConfigError(key,
                        "expected a matrix as a nonempty array of rows");
    }
    const auto rows = static_cast<Eigen::Index>(v.size());
    const auto cols = static_cast<Eigen::Index>(v[0].size());
    Eigen::MatrixXd out(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
      const Json& row = v[static_cast<std::size_t>(i)];
      const std::string rkey = key + "[" + std::to_string(i) + "]";
      if (!row.is_array()) {
        throw ConfigError(rkey, "expected an array, got " + type_name(row));
      }
      if (static_cast<Eigen::Index>(row.size()) != cols) {
        throw ConfigError(rkey, "row has " + std::to_string(row.size()) +
                                    " entries, expected " +
                                    std::to_string(cols));
      }
      for (Eigen::Index j = 0; j < cols; ++j) {
        out(i, j) = as_number(row[static_cast<std::size_t>(j)],
                              rkey + "[" + std::to_string(j) + "]");
      }
    }
    return out;
  }

  const Json* src_;
  Json& dst_;
  std::string path_;
  std::set<std::string> seen_;
};

std::filesystem::path default_out_dir() {
  if (const char* env = std::getenv(kOutDirEnv); env && *env) return env;
  return kDefaultOutDir;
}

AttackerKind kind_of(const std::string& name) {
  if (name == "none") return AttackerKind::None;
  if (name == "dominant-open" || name == "open-loop") {
    return AttackerKind::OpenLoop;
  }
  return AttackerKind::ClosedLoop;
}

template <class F>
auto rethrow_as(const std::string& key, F&& f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const ValidationError& e) {
    throw ConfigError(key, e.what());
  }
}

bool needs_model(std::string_view sub) {
  return sub == "synth" || sub == "rho-min" || sub == "simulate" ||
         sub == "sweep" || sub == "acc";
}

bool needs_p(std::string_view sub) {
  return sub == "synth" || sub == "simulate" || sub == "acc";
}

}  // namespace

Json load_config_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot read config file " + path.string());
  try {
    return Json::parse(is);
  } catch (const Json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

void set_key(Json& config, std::string_view dotted, Json value) {
  Json* node = &config;
  std::size_t start = 0;
  while (true) {
    const auto dot = dotted.find('.', start);
    const std::string part(dotted.substr(start, dot - start));
    if (!node->is_object()) *node = Json::object();
    if (dot == std::string_view::npos) {
      (*node)[part] = std::move(value);
      return;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
}

Json matrix_to_json(const Eigen::MatrixXd& M) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

AttackerSpec RunConfig::attacker(double p) const {
  const TransmissionPolicy tx(p);
  if (attacker_name == "none") return NoAttacker{};
  if (attacker_name == "dominant-closed") return DominantClosedAttacker{};
  if (attacker_name == "dominant-open") return DominantOpenAttacker{};
  if (attacker_name == "closed-loop") {
    const auto head = attacker_json.at("iota").get<std::vector<double>>();
    return ClosedLoopAttackPolicy(head, attacker_json.at("tail_mass").get<double>(),
                                  attacker_json.at("tail_ratio").get<double>());
  }
  return rethrow_as("attacker.p_prime", [&] {
    return AttackerSpec(
        OpenLoopAttackPolicy(attacker_json.at("p_prime").get<double>(), tx));
  });
}

std::vector<std::uint64_t> RunConfig::seeds() const {
  std::vector<std::uint64_t> out;
  for (int i = 0; i < n_seeds; ++i) {
    out.push_back(base_seed + static_cast<std::uint64_t>(i));
  }
  return out;
}

RunConfig resolve_config(const Json& user, std::string_view subcommand) {
  RunConfig cfg;
  cfg.subcommand = std::string(subcommand);
  cfg.json = Json::object();
  Section root(&user, cfg.json, "");

  // Model.
  const bool want_model =
      needs_model(subcommand) || (user.is_object() && user.contains("model"));
  std::optional<Eigen::Index> n_states;
  if (want_model) {
    Section m = root.child("model");
    const std::string kind =
        m.string("kind", subcommand == "acc" ? "acc" : "discrete",
                 {"discrete", "continuous", "acc"});
    if (subcommand == "acc" && kind != "acc") {
      throw ConfigError("model.kind", "the acc subcommand needs kind 'acc'");
    }
    if (kind == "acc") {
      cfg.model = ModelKind::Acc;
      acc::AccParams& a = cfg.acc.params;
      a.K_L = m.number("K_L", a.K_L);
      a.T_L = m.number("T_L", a.T_L);
      a.tau_h = m.number("tau_h", a.tau_h);
      a.d_0 = m.number("d_0", a.d_0);
      a.dt = m.number("dt", a.dt);
      const Eigen::VectorXd qd = m.vector("Q_diag", Eigen::VectorXd(a.Q_diag));
      if (qd.size() != 3) throw ConfigError(m.key("Q_diag"), "needs 3 entries");
      a.Q_diag = qd;
      a.R = m.number("R", a.R);
      a.lag = acc::parse_lag_input(
          m.string("lag", std::string(acc::to_string(a.lag)),
                   {"canonical", "printed"}));
      a.noise_variance = m.number("noise_variance", a.noise_variance);
      for (const char* k : {"A", "B", "G", "sigma_v"}) {
        m.forbid(k, "not used with kind 'acc'");
      }
      rethrow_as("model", [&] { a.validate(); return 0; });

      Section s = root.child("scenario");
      acc::BrakeScenario& b = cfg.acc.scenario;
      b.lead_x0 = s.number("lead_x0", b.lead_x0);
      b.lead_v0 = s.number("lead_v0", b.lead_v0);
      b.ego_x0 = s.number("ego_x0", b.ego_x0);
      b.ego_v0 = s.number("ego_v0", b.ego_v0);
      b.brake_start = s.number("brake_start", b.brake_start);
      b.brake_decel = s.number("brake_decel", b.brake_decel);
      b.duration = s.number("duration", b.duration);
      s.finish();
      rethrow_as("scenario", [&] { b.validate(); return 0; });

      cfg.sys = acc::build_acc_discrete(a);
    } else {
      cfg.model = kind == "continuous" ? ModelKind::Continuous : ModelKind::Discrete;
      const Eigen::MatrixXd A = m.matrix("A", std::nullopt);
      const Eigen::Index n = A.rows();
      const Eigen::MatrixXd B = m.matrix("B", std::nullopt);
      const Eigen::MatrixXd G = m.matrix("G", Eigen::MatrixXd::Identity(n, n));
      const Eigen::MatrixXd S = m.matrix("sigma_v", Eigen::MatrixXd::Zero(n, n));
      if (cfg.model == ModelKind::Continuous) {
        ContinuousSystem cs{A, B, G, S, m.number("dt", std::nullopt)};
        cfg.sys = rethrow_as("model", [&] { return discretize_zoh(cs); });
      } else {
        m.forbid("dt", "only used with kind 'continuous'");
        cfg.sys = LinearSystem{A, B, G, S};
        rethrow_as("model", [&] { cfg.sys.validate(); return 0; });
      }
      for (const char* k : {"K_L", "T_L", "tau_h", "d_0", "Q_diag", "R", "lag",
                            "noise_variance"}) {
        m.forbid(k, "only used with kind 'acc'");
      }
      root.forbid("scenario", "only used with model.kind 'acc'");
    }
    m.finish();
    n_states = cfg.sys.states();
  } else {
    root.forbid("scenario", "only used with model.kind 'acc'");
  }

  // Cost.
  if (n_states && cfg.model != ModelKind::Acc) {
    Section c = root.child("cost");
    const Eigen::Index n = *n_states;
    const Eigen::Index mi = cfg.sys.inputs();
    cfg.cost.Q = c.matrix("Q", Eigen::MatrixXd::Identity(n, n));
    cfg.cost.R = c.matrix("R", Eigen::MatrixXd::Identity(mi, mi));
    if (auto h = c.optional_integer("horizon")) {
      cfg.cost.horizon = static_cast<int>(*h);
    }
    c.finish();
    rethrow_as("cost", [&] { cfg.cost.validate(n, mi); return 0; });
  } else if (n_states) {
    root.forbid("cost", "derived from model.Q_diag and model.R for kind 'acc'");
    cfg.cost = cfg.acc.params.cost();
  } else {
    root.forbid("cost", "needs a model");
  }

  // Transmission probability.
  cfg.p = root.optional_number("p");
  if (needs_p(subcommand) && !cfg.p) throw ConfigError("p", "required");
  if (cfg.p && !(*cfg.p > 0.0 && *cfg.p <= 1.0)) {
    throw ConfigError("p", "must lie in (0, 1]");
  }

  // Attacker.
  {
    Section a = root.child("attacker");
    cfg.attacker_name = a.string(
        "kind", "dominant-closed",
        {"none", "dominant-closed", "dominant-open", "closed-loop", "open-loop"});
    cfg.attacker_kind = kind_of(cfg.attacker_name);
    Json& dst = cfg.json["attacker"];
    if (cfg.attacker_name == "closed-loop") {
      const Eigen::VectorXd iota = a.vector("iota", std::nullopt);
      const double mass = a.number("tail_mass", 0.0);
      const double ratio = a.number("tail_ratio", 0.0);
      rethrow_as("attacker.iota", [&] {
        return ClosedLoopAttackPolicy(
            std::vector<double>(iota.data(), iota.data() + iota.size()), mass,
            ratio);
      });
      a.forbid("p_prime", "only used with kind 'open-loop'");
    } else if (cfg.attacker_name == "open-loop") {
      const double pp = a.number("p_prime", std::nullopt);
      if (!(pp >= 0.0 && pp <= 1.0)) {
        throw ConfigError("attacker.p_prime", "must lie in [0, 1]");
      }
      for (const char* k : {"iota", "tail_mass", "tail_ratio"}) {
        a.forbid(k, "only used with kind 'closed-loop'");
      }
    } else {
      for (const char* k : {"iota", "tail_mass", "tail_ratio", "p_prime"}) {
        a.forbid(k, "not used with kind '" + cfg.attacker_name + "'");
      }
    }
    a.finish();
    cfg.attacker_json = dst;
    if (cfg.model == ModelKind::Acc && n_states &&
        (cfg.attacker_name == "closed-loop" ||
         cfg.attacker_name == "open-loop")) {
      throw ConfigError("attacker.kind",
                        "the ACC scenario plays a dominant attacker or none");
    }
    if (cfg.p) cfg.attacker(*cfg.p);  // validates p_prime <= p
  }

  // Counter.
  {
    Section c = root.child("counter");
    cfg.counter.e_plus = static_cast<int>(c.integer("e_plus", 2));
    cfg.counter.e_minus = static_cast<int>(c.integer("e_minus", -1));
    cfg.counter.e_bar = static_cast<int>(c.integer("e_bar", 128));
    cfg.s0 = static_cast<int>(c.integer("s0", 0));
    c.finish();
    rethrow_as("counter", [&] { cfg.counter.validate(); return 0; });
    if (cfg.s0 < 0 || cfg.s0 >= cfg.counter.e_bar) {
      throw ConfigError("counter.s0", "must lie in [0, e_bar)");
    }
  }

  // Controller and episode shape.
  if (cfg.model == ModelKind::Acc && n_states) {
    cfg.controller = root.string("controller", "stationary", {"stationary", "ladder"});
    root.forbid("x0", "derived from the scenario for kind 'acc'");
    root.forbid("horizon", "derived from scenario.duration and model.dt");
    cfg.x0 = acc::initial_state(cfg.acc.params, cfg.acc.scenario);
    cfg.horizon = cfg.acc.scenario.steps(cfg.acc.params.dt);
    cfg.json["x0"] = std::vector<double>(cfg.x0.data(), cfg.x0.data() + 3);
    cfg.json["horizon"] = cfg.horizon;
  } else {
    cfg.controller =
        root.string("controller", "stationary", {"stationary", "ladder", "zero"});
    if (n_states) {
      cfg.x0 = root.vector("x0", Eigen::VectorXd::Zero(*n_states));
      if (cfg.x0.size() != *n_states) {
        throw ConfigError("x0", "needs " + std::to_string(*n_states) + " entries");
      }
    } else {
      root.forbid("x0", "needs a model");
    }
    const long long h = root.integer("horizon", 100);
    if (h < 1) throw ConfigError("horizon", "must be at least 1");
    cfg.horizon = static_cast<int>(h);
  }
  cfg.continue_after_busoff =
      root.string("post_busoff", "continue", {"continue", "stop"}) == "continue";

  {
    Section s = root.child("seeds");
    cfg.base_seed = s.unsigned_integer("base", 1);
    const long long count = s.integer("count", 100);
    if (count < 1) throw ConfigError("seeds.count", "must be at least 1");
    cfg.n_seeds = static_cast<int>(count);
    s.finish();
  }
  {
    const long long t = root.integer("threads", 0);
    if (t < 0) throw ConfigError("threads", "must be nonnegative");
    cfg.threads = static_cast<unsigned>(t);
  }

  {
    Section s = root.child("synthesis");
    cfg.synthesis.tol = s.number("tol", cfg.synthesis.tol);
    cfg.synthesis.max_iter =
        static_cast<int>(s.integer("max_iter", cfg.synthesis.max_iter));
    cfg.synthesis.divergence_norm =
        s.number("divergence_norm", cfg.synthesis.divergence_norm);
    cfg.synthesis.growth_window =
        static_cast<int>(s.integer("growth_window", cfg.synthesis.growth_window));
    cfg.tol_rho = s.number("tol_rho", cfg.tol_rho);
    s.finish();
    if (!(cfg.synthesis.tol > 0.0) || cfg.synthesis.max_iter < 1 ||
        !(cfg.synthesis.divergence_norm > 0.0) ||
        cfg.synthesis.growth_window < 1 || !(cfg.tol_rho > 0.0)) {
      throw ConfigError("synthesis", "tolerances and limits must be positive");
    }
  }

  {
    Section s = root.child("sweep");
    const Eigen::VectorXd ps =
        s.vector("p", Eigen::Vector4d(0.15, 0.33, 0.5, 0.8));
    cfg.sweep_p.assign(ps.data(), ps.data() + ps.size());
    s.finish();
    for (double p : cfg.sweep_p) {
      if (!(p > 0.0 && p <= 1.0)) throw ConfigError("sweep.p", "entries must lie in (0, 1]");
    }
  }

  {
    Section s = root.child("hitting_time");
    auto ps = s.optional_list("p");
    auto qs = s.optional_list("q");
    cfg.paper_closed_form = s.boolean("paper_closed_form", false);
    s.finish();
    if (ps && qs) {
      throw ConfigError("hitting_time", "give either p or q, not both");
    }
    if (ps) {
      cfg.ht_p = *ps;
      for (double p : cfg.ht_p) {
        if (!(p > 0.0 && p <= 1.0)) throw ConfigError("hitting_time.p", "entries must lie in (0, 1]");
      }
    } else if (qs) {
      cfg.ht_q = *qs;
    } else if (subcommand == "hitting-time") {
      for (int i = 1; i <= 20; ++i) cfg.ht_q.push_back(0.05 * i);
      cfg.json["hitting_time"]["q"] = cfg.ht_q;
    }
    for (double q : cfg.ht_q) {
      if (!(q > 0.0 && q <= 1.0)) throw ConfigError("hitting_time.q", "entries must lie in (0, 1]");
    }
  }

  {
    Section o = root.child("output");
    cfg.out_dir = o.string("dir", default_out_dir().string(), {});
    cfg.format = parse_format(o.string("format", "csv", {"csv", "json"}));
    const std::string t = o.string("traces", "none", {"none", "first", "all"});
    cfg.traces = t == "all" ? TraceMode::All
                 : t == "first" ? TraceMode::First
                                : TraceMode::None;
    o.finish();
  }

  root.finish();

  if (cfg.model == ModelKind::Acc && n_states) {
    cfg.acc.counter = cfg.counter;
    cfg.acc.mode = cfg.controller == "ladder" ? acc::ControllerMode::Ladder
                                              : acc::ControllerMode::Stationary;
    cfg.acc.attacker = cfg.attacker_kind;
    cfg.acc.synthesis = cfg.synthesis;
  }
  return cfg;
}

}  // namespace busoff::cli
