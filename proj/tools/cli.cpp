#include "cli.hpp"

#include "mbot/closed_form.hpp"
#include "mbot/exact.hpp"
#include "mbot/experiments.hpp"
#include "mbot/flow.hpp"
#include "mbot/image.hpp"
#include "mbot/io.hpp"
#include "mbot/parallel.hpp"
#include "mbot/sinkhorn.hpp"
#include "mbot/subsets.hpp"
#include "mbot/timing.hpp"
#include "mbot/transfer.hpp"

#include <CLI11.hpp>
#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

namespace mbot::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

struct Global {
  std::uint64_t seed = kDefaultSeed;
  int jobs = 0;
  std::string out_dir = ".";
  std::string format = "json";
  bool allow_nonconverged = false;
};

// State of one invocation: where outputs go and what ends up in the manifest.
struct Run {
  std::string subcommand;
  std::vector<std::string> args;
  Global global;
  fs::path dir;
  std::vector<std::string> outputs;
  json extra = json::object();
  bool not_converged = false;
  bool diverged = false;
  std::ostream* out = nullptr;

  fs::path output(const std::string& name) {
    const fs::path p = dir / name;
    outputs.push_back(p.string());
    return p;
  }
};

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream f(path, mode);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  return f;
}

void close_checked(std::ofstream& f, const fs::path& path) {
  f.close();
  if (!f) throw std::runtime_error("failed to write " + path.string());
}

// ---- summaries --------------------------------------------------------------

std::string csv_cell(const json& v) {
  if (v.is_number_float()) return format_double(v.get<double>());
  if (v.is_string()) return v.get<std::string>();
  if (v.is_null()) return "";
  return v.dump();
}

void flatten(const json& j, const std::string& prefix, json& flat) {
  for (const auto& [key, val] : j.items()) {
    const std::string name = prefix.empty() ? key : prefix + "_" + key;
    if (val.is_object()) {
      flatten(val, name, flat);
    } else if (!val.is_array()) {
      flat[name] = val;
    }
  }
}

// A summary with a "rows" array becomes one CSV line per row; otherwise its
// scalar fields (nested objects flattened) form a single line.
std::string to_csv(const json& summary) {
  std::vector<json> rows;
  if (summary.contains("rows") && summary["rows"].is_array()) {
    for (const auto& r : summary["rows"]) {
      json flat = json::object();
      flatten(r, "", flat);
      rows.push_back(std::move(flat));
    }
  } else {
    json flat = json::object();
    flatten(summary, "", flat);
    rows.push_back(std::move(flat));
  }
  std::vector<std::string> header;
  std::set<std::string> seen;
  for (const auto& r : rows)
    for (const auto& [key, val] : r.items())
      if (seen.insert(key).second) header.push_back(key);
  std::ostringstream s;
  for (std::size_t i = 0; i < header.size(); ++i) s << (i ? "," : "") << header[i];
  s << '\n';
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (i) s << ',';
      if (r.contains(header[i])) s << csv_cell(r[header[i]]);
    }
    s << '\n';
  }
  return s.str();
}

std::string render(const json& summary, const std::string& format) {
  return format == "csv" ? to_csv(summary) : summary.dump(2) + "\n";
}

void emit_summary(Run& run, const json& summary) {
  const std::string text = render(summary, run.global.format);
  const fs::path path = run.output(run.subcommand + "." + run.global.format);
  auto f = open_out(path);
  f << text;
  close_checked(f, path);
  *run.out << text;
}

void write_json(Run& run, const std::string& name, const json& j) {
  const fs::path path = run.output(name);
  auto f = open_out(path);
  f << j.dump(2) << '\n';
  close_checked(f, path);
}

json versions() {
  json v;
  v["mbot"] = MBOT_VERSION;
  v["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
               std::to_string(EIGEN_MINOR_VERSION);
  v["nlohmann_json"] = std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                       std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                       std::to_string(NLOHMANN_JSON_VERSION_PATCH);
  v["cli11"] = CLI11_VERSION;
#if defined(__clang__)
  v["compiler"] = "clang " __clang_version__;
#elif defined(__GNUC__)
  v["compiler"] = "gcc " __VERSION__;
#else
  v["compiler"] = "unknown";
#endif
  return v;
}

void write_manifest(Run& run, double seconds, int status, const std::string& error) {
  json m;
  m["subcommand"] = run.subcommand;
  m["argv"] = run.args;
  m["seed"] = run.global.seed;
  m["jobs"] = resolve_jobs(run.global.jobs);
  m["versions"] = versions();
  m["wall_clock_seconds"] = seconds;
  m["exit_status"] = status;
  if (!error.empty()) m["error"] = error;
  m["outputs"] = run.outputs;
  m["details"] = run.extra;
  const fs::path path = run.dir / "manifest.json";
  auto f = open_out(path);
  f << m.dump(2) << '\n';
  close_checked(f, path);
}

// ---- shared inputs ----------------------------------------------------------

bool is_image_path(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".ppm";
}

PointCloud load_cloud(const std::string& path) {
  if (is_image_path(path)) return load_image(path).cloud();
  return read_cloud_csv(fs::path(path));
}

struct SolverOpts {
  std::string loss = "W";
  std::string cost = "euclidean";
  SinkhornParams sinkhorn{};
};

void add_solver_options(CLI::App* sc, SolverOpts& o) {
  sc->add_option("--loss", o.loss, "OT loss: W, W_eps or S_eps")
      ->check(CLI::IsMember({"W", "W_eps", "S_eps"}))
      ->capture_default_str();
  sc->add_option("--cost", o.cost, "Ground cost: abs, euclidean or sq_euclidean")
      ->check(CLI::IsMember({"abs", "euclidean", "sq_euclidean"}))
      ->capture_default_str();
  sc->add_option("--eps", o.sinkhorn.epsilon, "Entropic regularization")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sc->add_option("--tol", o.sinkhorn.tol, "Sinkhorn marginal tolerance (L1)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sc->add_option("--max-iters", o.sinkhorn.max_iters, "Sinkhorn iteration cap")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sc->add_flag("--log-domain", o.sinkhorn.log_domain, "Force log-domain Sinkhorn updates");
}

CostSpec make_cost(const SolverOpts& o, Index dim) {
  CostSpec c{parse_cost_kind(o.cost)};
  c.check_dimension(dim);
  return c;
}

MinibatchConfig batch_config(const Global& g, const SolverOpts& o, Index m, Index k) {
  MinibatchConfig cfg;
  cfg.m = m;
  cfg.k = k;
  cfg.seed = g.seed;
  cfg.loss = parse_loss_kind(o.loss);
  cfg.sinkhorn = o.sinkhorn;
  cfg.jobs = g.jobs;
  return cfg;
}

bool is_entropic(LossKind loss) { return loss != LossKind::wasserstein; }

json sinkhorn_stats(const SinkhornResult& r) {
  json s;
  s["iterations"] = r.iterations;
  s["residual"] = r.residual;
  s["converged"] = r.converged;
  s["log_domain"] = r.log_domain;
  return s;
}

void check_same_dim(const PointCloud& a, const PointCloud& b) {
  if (a.dim() != b.dim()) {
    throw std::invalid_argument("input dimensions differ: " + std::to_string(a.dim()) + " vs " +
                                std::to_string(b.dim()));
  }
}

// ---- eval -------------------------------------------------------------------

struct EvalOpts {
  std::string source, target;
  SolverOpts solver;
  Index m = 0;
  Index k = 100;
  bool exact = false;
  std::string pairs = "iid";
  std::uint64_t cap = kDefaultEnumerationCap;
};

void cmd_eval(Run& run, const EvalOpts& o) {
  const PointCloud a = load_cloud(o.source), b = load_cloud(o.target);
  check_same_dim(a, b);
  const CostSpec cost = make_cost(o.solver, a.dim());
  MinibatchConfig cfg = batch_config(run.global, o.solver, o.m, o.k);
  cfg.enumeration_cap = o.cap;
  cfg.pair_sampling = o.pairs == "distinct" ? PairSampling::distinct : PairSampling::iid;

  json stats = json::object();
  json r;
  double value = 0.0;
  bool converged = true;
  std::string mode;
  Index m = 0, k = 0;
  if (o.m > 0) {
    cfg.validate(a.size(), b.size());
    m = o.m;
    if (o.exact) {
      mode = "enumerated";
      value = u_stat_exact(a, b, cost, cfg);
      k = static_cast<Index>(*binomial(static_cast<std::uint64_t>(a.size()), static_cast<std::uint64_t>(m)) *
                             *binomial(static_cast<std::uint64_t>(b.size()), static_cast<std::uint64_t>(m)));
    } else {
      mode = "subsampled";
      const auto est = u_stat_subsampled(a, b, cost, cfg);
      value = est.value;
      converged = est.converged;
      k = o.k;
      if (k > 1) {
        double ss = 0.0;
        for (double v : est.per_draw) ss += (v - value) * (v - value);
        stats["std_error"] = std::sqrt(ss / static_cast<double>(k - 1) / static_cast<double>(k));
      }
      stats["pair_sampling"] = o.pairs;
    }
  } else {
    if (a.size() != b.size()) {
      throw std::invalid_argument("full solvers need equal sizes; pass --m for a minibatch estimate");
    }
    mode = "full";
    m = a.size();
    k = 1;
    switch (cfg.loss) {
      case LossKind::wasserstein: {
        value = solve_exact(a, b, cost).value;
        stats["solver"] = a.dim() == 1 ? "sorted_1d" : "assignment";
        break;
      }
      case LossKind::entropic: {
        const auto s = sinkhorn(a, b, cost, cfg.sinkhorn);
        value = s.value;
        converged = s.converged;
        stats = sinkhorn_stats(s);
        break;
      }
      case LossKind::sinkhorn_divergence: {
        const auto d = sinkhorn_divergence_full(a, b, cost, cfg.sinkhorn);
        value = d.value;
        converged = d.cross.converged && d.self_a.converged && d.self_b.converged;
        stats["cross"] = sinkhorn_stats(d.cross);
        stats["self_source"] = sinkhorn_stats(d.self_a);
        stats["self_target"] = sinkhorn_stats(d.self_b);
        break;
      }
    }
  }
  if (o.m > 0 && is_entropic(cfg.loss)) stats["converged"] = converged;
  run.not_converged = !converged;

  r["value"] = value;
  r["loss"] = o.solver.loss;
  r["cost"] = o.solver.cost;
  r["mode"] = mode;
  r["n"] = a.size();
  r["n_target"] = b.size();
  r["m"] = m;
  r["k"] = k;
  r["seed"] = run.global.seed;
  if (is_entropic(cfg.loss)) r["epsilon"] = cfg.sinkhorn.epsilon;
  r["solver_stats"] = stats;
  emit_summary(run, r);
}

// ---- plan -------------------------------------------------------------------

struct PlanOpts {
  std::string source, target;
  bool enumerate = false;
  bool subsample = false;
  bool closed_form = false;
  std::vector<Index> m;
  Index n = 0;
  Index k = 100;
  double delta = 0.1;
  std::string plan_format = "csv";
  std::uint64_t cap = kDefaultEnumerationCap;
  SolverOpts solver;
};

struct Marginals {
  double max_row_dev = 0.0, max_col_dev = 0.0, row_l1 = 0.0, col_l1 = 0.0, total = 0.0;
  Vector rows, cols;
};

Marginals marginal_errors(const Vector& rows, const Vector& cols) {
  Marginals mg;
  mg.rows = rows;
  mg.cols = cols;
  const double ra = 1.0 / static_cast<double>(rows.size());
  const double cb = 1.0 / static_cast<double>(cols.size());
  mg.max_row_dev = (rows.array() - ra).abs().maxCoeff();
  mg.max_col_dev = (cols.array() - cb).abs().maxCoeff();
  mg.row_l1 = (rows.array() - ra).abs().sum();
  mg.col_l1 = (cols.array() - cb).abs().sum();
  mg.total = rows.sum();
  return mg;
}

void write_plan_file(Run& run, const std::string& stem, const Matrix* dense, const SparsePlan* sparse,
                     std::uint32_t flags, const std::string& format, json& row) {
  if (format == "bin") {
    const Matrix full = dense ? *dense : sparse->to_dense();
    if (full.rows() != full.cols()) throw std::invalid_argument("binary plan layout needs a square plan");
    const fs::path path = run.output(stem + ".bin");
    auto f = open_out(path, std::ios::binary);
    write_plan_binary(f, full, flags);
    close_checked(f, path);
    row["file"] = path.filename().string();
    return;
  }
  const fs::path path = run.output(stem + ".csv");
  auto f = open_out(path);
  if (dense) {
    write_plan_csv(f, *dense);
  } else {
    write_plan_csv(f, *sparse);
  }
  close_checked(f, path);
  row["file"] = path.filename().string();
}

void put_marginals(json& row, const Marginals& mg) {
  row["total_mass"] = mg.total;
  row["max_row_deviation"] = mg.max_row_dev;
  row["max_col_deviation"] = mg.max_col_dev;
  row["row_l1"] = mg.row_l1;
  row["col_l1"] = mg.col_l1;
}

void cmd_plan(Run& run, const PlanOpts& o) {
  if (o.enumerate + o.subsample + o.closed_form != 1) {
    throw CLI::ValidationError("plan", "choose exactly one of --enumerate, --subsample, --closed-form-1d");
  }
  json r;
  r["seed"] = run.global.seed;
  json rows = json::array();
  if (o.closed_form) {
    if (o.n < 1) throw CLI::ValidationError("--n", "--closed-form-1d needs --n >= 1");
    r["mode"] = "closed_form_1d";
    r["n"] = o.n;
    for (Index m : o.m) {
      const Matrix p = closed_form_1d(o.n, m);
      json row;
      row["m"] = m;
      write_plan_file(run, "plan_n" + std::to_string(o.n) + "_m" + std::to_string(m), &p, nullptr,
                      kPlanClosedForm, o.plan_format, row);
      put_marginals(row, marginal_errors(p.rowwise().sum(), p.colwise().sum().transpose()));
      rows.push_back(row);
    }
    r["rows"] = rows;
    emit_summary(run, r);
    return;
  }

  if (o.source.empty() || o.target.empty()) {
    throw CLI::ValidationError("plan", "--enumerate and --subsample need source and target clouds");
  }
  const PointCloud a = load_cloud(o.source), b = load_cloud(o.target);
  check_same_dim(a, b);
  const CostSpec cost = make_cost(o.solver, a.dim());
  r["mode"] = o.enumerate ? "enumerate" : "subsample";
  r["loss"] = o.solver.loss;
  r["cost"] = o.solver.cost;
  r["n"] = a.size();
  r["n_target"] = b.size();
  if (o.subsample) {
    r["k"] = o.k;
    r["delta"] = o.delta;
  }
  for (Index m : o.m) {
    MinibatchConfig cfg = batch_config(run.global, o.solver, m, o.k);
    cfg.enumeration_cap = o.cap;
    cfg.validate(a.size(), b.size());
    const SparsePlan plan = o.enumerate ? plan_averaged_exact(a, b, cost, cfg) : plan_subsampled(a, b, cost, cfg);
    json row;
    row["m"] = m;
    write_plan_file(run, "plan_m" + std::to_string(m), nullptr, &plan,
                    o.enumerate ? kPlanEnumerated : kPlanSubsampled, o.plan_format, row);
    const Marginals mg = marginal_errors(plan.row_sums(), plan.col_sums());
    put_marginals(row, mg);
    row["transport_cost"] =
        plan.inner([&](Index i, Index j) { return cost(a.points().row(i), b.points().row(j)); });
    if (o.subsample) {
      const double bound = marginal_bound(o.k, o.delta);
      Index within = 0;
      for (Index i = 0; i < mg.rows.size(); ++i) within += std::abs(mg.rows(i) - 1.0 / double(a.size())) <= bound;
      for (Index j = 0; j < mg.cols.size(); ++j) within += std::abs(mg.cols(j) - 1.0 / double(b.size())) <= bound;
      row["marginal_bound"] = bound;
      row["coverage"] = static_cast<double>(within) / static_cast<double>(mg.rows.size() + mg.cols.size());
    }
    rows.push_back(row);
  }
  r["rows"] = rows;
  emit_summary(run, r);
}

// ---- rate -------------------------------------------------------------------

struct RateOpts {
  std::string experiment = "deviation";
  std::string source, target;
  std::vector<Index> n{100};
  std::vector<Index> m{10};
  std::vector<Index> k{10, 100, 1000};
  int reps = 200;
  double delta = 0.1;
  std::string generator = "uniform";
  Index dim = 2;
  Index reference_draws = 100000;
  std::uint64_t cap = kDefaultEnumerationCap;
  SolverOpts solver;
};

void cmd_rate(Run& run, const RateOpts& o) {
  CloudGenerator gen;
  gen.kind = parse_generator_kind(o.generator);
  gen.dim = o.dim;
  const LossKind loss = parse_loss_kind(o.solver.loss);
  json r;
  r["experiment"] = o.experiment;
  r["loss"] = o.solver.loss;
  r["cost"] = o.solver.cost;
  r["delta"] = o.delta;
  r["reps"] = o.reps;
  r["seed"] = run.global.seed;
  json rows = json::array();
  json slopes = json::array();

  if (o.experiment == "deviation") {
    DeviationExperiment exp;
    exp.source = gen;
    exp.target = gen;
    exp.cost = make_cost(o.solver, o.dim);
    exp.loss = loss;
    exp.sinkhorn = o.solver.sinkhorn;
    exp.delta = o.delta;
    exp.reps = o.reps;
    exp.seed = run.global.seed;
    exp.jobs = run.global.jobs;
    exp.enumeration_cap = o.cap;
    exp.min_reference_draws = o.reference_draws;
    for (Index n : o.n)
      for (Index m : o.m)
        if (m <= n)
          for (Index k : o.k) exp.grid.push_back({n, m, k});
    if (exp.grid.empty()) throw std::invalid_argument("empty grid: every m exceeds every n");
    const auto records = run_deviation_experiment(exp);
    {
      const fs::path path = run.output("rate_records.csv");
      auto f = open_out(path);
      write_records_csv(f, records);
      close_checked(f, path);
    }
    const auto summary = summarize_coverage(records);
    std::map<std::pair<Index, Index>, std::pair<std::vector<double>, std::vector<double>>> series;
    for (const auto& s : summary) {
      json row;
      row["n"] = s.n;
      row["m"] = s.m;
      row["k"] = s.k;
      row["coverage"] = s.coverage;
      row["mean_abs_error"] = s.mean_abs_error;
      row["flagged"] = s.flagged;
      rows.push_back(row);
      series[{s.n, s.m}].first.push_back(static_cast<double>(s.k));
      series[{s.n, s.m}].second.push_back(s.mean_abs_error);
    }
    for (const auto& [key, xy] : series) {
      if (xy.first.size() < 2) continue;
      json s;
      s["n"] = key.first;
      s["m"] = key.second;
      s["slope"] = loglog_slope(xy.first, xy.second);
      slopes.push_back(s);
    }
  } else {
    PointCloud a, b;
    if (!o.source.empty() || !o.target.empty()) {
      if (o.source.empty() || o.target.empty()) throw std::invalid_argument("marginal rate needs both clouds");
      a = load_cloud(o.source);
      b = load_cloud(o.target);
      check_same_dim(a, b);
    } else {
      CounterRng ra(derive_seed(run.global.seed, 1), 0), rb(derive_seed(run.global.seed, 2), 0);
      a = PointCloud(gen.sample(ra, o.n.front()));
      b = PointCloud(gen.sample(rb, o.n.front()));
    }
    const CostSpec cost = make_cost(o.solver, a.dim());
    r["n"] = a.size();
    r["n_target"] = b.size();
    const auto report = run_marginal_experiment(a, b, cost, o.m, o.k, o.reps, run.global.seed, o.delta,
                                                 run.global.jobs, loss, o.solver.sinkhorn);
    {
      const fs::path path = run.output("rate_marginal.csv");
      auto f = open_out(path);
      write_marginal_csv(f, report);
      close_checked(f, path);
    }
    for (const auto& mr : report.rows) {
      json row;
      row["m"] = mr.m;
      row["k"] = mr.k;
      row["mean_l1"] = mr.mean_l1;
      row["bound"] = mr.bound;
      row["coverage"] = mr.coverage;
      rows.push_back(row);
    }
    if (o.k.size() >= 2) {
      for (const auto& [m, slope] : report.slopes) {
        json s;
        s["m"] = m;
        s["slope"] = slope;
        slopes.push_back(s);
      }
    }
  }
  json slope_doc;
  slope_doc["experiment"] = o.experiment;
  slope_doc["slopes"] = slopes;
  write_json(run, "rate_slopes.json", slope_doc);
  r["rows"] = rows;
  emit_summary(run, r);
}

// ---- flow -------------------------------------------------------------------

struct FlowOpts {
  std::string source, target;
  FlowConfig config{};
  SolverOpts solver;
  bool unscaled = false;

  FlowOpts() {
    config.batches.m = 50;
    solver.loss = "S_eps";
    solver.cost = "sq_euclidean";
  }
};

void cmd_flow(Run& run, FlowOpts o) {
  const PointCloud start = load_cloud(o.source), target = load_cloud(o.target);
  check_same_dim(start, target);
  const CostSpec cost = make_cost(o.solver, start.dim());
  FlowConfig fc = o.config;
  const Index m = fc.batches.m, k = fc.batches.k;
  fc.batches = batch_config(run.global, o.solver, m, k);
  fc.scale_by_batch_size = !o.unscaled;
  const auto traj = gradient_flow(start, target, cost, fc);
  for (const auto& p : write_trajectory(traj, run.dir)) run.outputs.push_back(p.string());

  const auto& mon = traj.monitor_trace;
  int down = 0;
  for (std::size_t i = 1; i < mon.size(); ++i) down += mon[i] <= mon[i - 1];
  json r;
  r["loss"] = o.solver.loss;
  r["cost"] = o.solver.cost;
  r["n"] = start.size();
  r["n_target"] = target.size();
  r["m"] = m;
  r["k"] = k;
  r["step_size"] = fc.step_size;
  r["iters"] = fc.iters;
  r["steps_run"] = traj.loss_trace.size();
  r["seed"] = run.global.seed;
  r["diverged"] = traj.diverged;
  r["stale_gradients"] = traj.stale;
  r["initial_loss"] = traj.loss_trace.front();
  r["final_loss"] = traj.loss_trace.back();
  r["monitor_initial"] = mon.front();
  r["monitor_final"] = mon.back();
  r["monitor_nonincreasing_fraction"] = mon.size() > 1 ? down / static_cast<double>(mon.size() - 1) : 1.0;
  run.not_converged = traj.stale;
  run.diverged = traj.diverged;
  emit_summary(run, r);
}

// ---- color ------------------------------------------------------------------

struct ColorOpts {
  std::string image1, image2;
  Index m = 1000;
  Index k = 10;
  std::string normalization = "per_pixel_mass";
  std::string extension;
  bool mass_csv = false;
  SolverOpts solver;

  ColorOpts() { solver.cost = "sq_euclidean"; }
};

void write_mass_csv(Run& run, const std::string& name, const std::vector<double>& mass) {
  const fs::path path = run.output(name);
  auto f = open_out(path);
  f << "pixel_index,mass\n";
  for (std::size_t i = 0; i < mass.size(); ++i) f << i << ',' << format_double(mass[i]) << '\n';
  close_checked(f, path);
}

void cmd_color(Run& run, const ColorOpts& o) {
  const PixelCloud s = load_image(o.image1), t = load_image(o.image2);
  TransferOptions opts;
  opts.batches = batch_config(run.global, o.solver, o.m, o.k);
  opts.cost = make_cost(o.solver, 3);
  opts.normalization = parse_normalization(o.normalization);
  opts.batches.validate(s.size(), t.size());
  const auto res = incremental_transfer(s, t, opts);

  std::string ext = o.extension.empty() ? fs::path(o.image1).extension().string() : o.extension;
  if (!ext.empty() && ext.front() != '.') ext.insert(ext.begin(), '.');
  save_image(res.source_mapped, run.output("image1_recolored" + ext));
  save_image(res.target_mapped, run.output("image2_recolored" + ext));
  if (o.mass_csv) {
    write_mass_csv(run, "image1_mass.csv", res.source_mass);
    write_mass_csv(run, "image2_mass.csv", res.target_mass);
  }

  json r;
  r["loss"] = o.solver.loss;
  r["normalization"] = o.normalization;
  r["n_source"] = s.size();
  r["n_target"] = t.size();
  r["m"] = o.m;
  r["k"] = o.k;
  r["seed"] = run.global.seed;
  r["source_uncovered"] = res.source_uncovered;
  r["target_uncovered"] = res.target_uncovered;
  r["peak_batch_bytes"] = res.peak_batch_bytes;
  run.extra["coverage"] = {{"source_uncovered", res.source_uncovered},
                           {"target_uncovered", res.target_uncovered}};
  emit_summary(run, r);
}

// ---- bench ------------------------------------------------------------------

struct BenchOpts {
  std::vector<std::string> solvers{"minibatch", "sinkhorn"};
  std::vector<Index> sizes{500, 1000, 2000};
  int reps = 3;
  Index dim = 2;
  Index m = 50;
  Index k = 100;
  SolverOpts solver;

  BenchOpts() { solver.cost = "sq_euclidean"; }
};

void cmd_bench(Run& run, const BenchOpts& o) {
  TimingSweep sweep;
  for (const auto& s : o.solvers) sweep.solvers.push_back(parse_bench_solver(s));
  sweep.sizes = o.sizes;
  sweep.reps = o.reps;
  sweep.dim = o.dim;
  sweep.batches = batch_config(run.global, o.solver, o.m, o.k);
  sweep.batches.jobs = 1;
  sweep.sinkhorn = o.solver.sinkhorn;
  sweep.seed = run.global.seed;
  const auto timings = run_timing_sweep(sweep);
  {
    const fs::path path = run.output("bench_timing.csv");
    auto f = open_out(path);
    f << "solver,n,rep,seconds\n";
    for (const auto& t : timings)
      f << to_string(t.solver) << ',' << t.n << ',' << t.rep << ',' << format_double(t.seconds) << '\n';
    close_checked(f, path);
  }
  json r;
  r["m"] = o.m;
  r["k"] = o.k;
  r["reps"] = o.reps;
  r["seed"] = run.global.seed;
  json rows = json::array();
  json slopes = json::object();
  for (BenchSolver s : sweep.solvers) {
    std::vector<double> ns, secs;
    for (Index n : sweep.sizes) {
      json row;
      row["solver"] = std::string(to_string(s));
      row["n"] = n;
      row["median_seconds"] = median_seconds(timings, s, n);
      ns.push_back(static_cast<double>(n));
      secs.push_back(row["median_seconds"].get<double>());
      rows.push_back(row);
    }
    if (ns.size() >= 2) slopes[std::string(to_string(s))] = loglog_slope(ns, secs);
  }
  r["loglog_slope"] = slopes;
  r["rows"] = rows;
  emit_summary(run, r);
}

// ---- dispatch ---------------------------------------------------------------

void add_output_options(CLI::App& app, Global& g) {
  app.add_option("--seed", g.seed, "Base seed for every random draw")->capture_default_str();
  app.add_option("--jobs", g.jobs, "Worker threads (0 = hardware concurrency)")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  app.add_option("--out-dir", g.out_dir, "Directory for outputs and manifest.json")->capture_default_str();
  app.add_option("--format", g.format, "Summary format")
      ->check(CLI::IsMember({"csv", "json"}))
      ->capture_default_str();
  app.add_flag("--allow-nonconverged", g.allow_nonconverged,
               "Exit 0 even if a Sinkhorn solve missed its tolerance");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Minibatch optimal transport toolkit", "mbot"};
  app.require_subcommand(1);
  app.fallthrough();
  Global g;
  add_output_options(app, g);

  Run state;
  state.args = args;
  state.out = &out;
  std::function<void()> action;

  EvalOpts eval;
  auto* e = app.add_subcommand("eval", "Evaluate W, W_eps or S_eps, full or minibatch");
  e->add_option("source", eval.source, "Source cloud (CSV or image)")->required();
  e->add_option("target", eval.target, "Target cloud (CSV or image)")->required();
  add_solver_options(e, eval.solver);
  e->add_option("--m", eval.m, "Batch size; 0 solves the full problem")->capture_default_str();
  e->add_option("--k", eval.k, "Number of sampled batch pairs")->check(CLI::PositiveNumber)->capture_default_str();
  e->add_flag("--exact", eval.exact, "With --m, average over every batch pair instead of sampling");
  e->add_option("--pairs", eval.pairs, "Pair sampling: iid or distinct")
      ->check(CLI::IsMember({"iid", "distinct"}))
      ->capture_default_str();
  e->add_option("--enumeration-cap", eval.cap, "Largest number of batch pairs to enumerate")->capture_default_str();
  e->callback([&] { action = [&] { cmd_eval(state, eval); }; });

  PlanOpts plan;
  auto* p = app.add_subcommand("plan", "Build an averaged minibatch plan and report its marginals");
  p->add_option("source", plan.source, "Source cloud");
  p->add_option("target", plan.target, "Target cloud");
  p->add_flag("--enumerate", plan.enumerate, "Average over all batch pairs");
  p->add_flag("--subsample", plan.subsample, "Average over --k sampled pairs");
  p->add_flag("--closed-form-1d", plan.closed_form, "Sorted 1D closed form (needs --n)");
  p->add_option("--m", plan.m, "Batch sizes")->required()->delimiter(',')->allow_extra_args(false);
  p->add_option("--n", plan.n, "Support size for --closed-form-1d");
  p->add_option("--k", plan.k, "Sampled pairs for --subsample")->check(CLI::PositiveNumber)->capture_default_str();
  p->add_option("--delta", plan.delta, "Confidence level of the marginal bound")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  p->add_option("--plan-format", plan.plan_format, "Plan file layout: csv or bin")
      ->check(CLI::IsMember({"csv", "bin"}))
      ->capture_default_str();
  p->add_option("--enumeration-cap", plan.cap, "Largest number of batch pairs to enumerate")->capture_default_str();
  add_solver_options(p, plan.solver);
  p->callback([&] { action = [&] { cmd_plan(state, plan); }; });

  RateOpts rate;
  auto* r = app.add_subcommand("rate", "Deviation and marginal-error sweeps over k");
  r->add_option("--experiment", rate.experiment, "deviation or marginal")
      ->check(CLI::IsMember({"deviation", "marginal"}))
      ->capture_default_str();
  r->add_option("--source", rate.source, "Source cloud for the marginal experiment");
  r->add_option("--target", rate.target, "Target cloud for the marginal experiment");
  r->add_option("--n", rate.n, "Cloud sizes")->delimiter(',')->allow_extra_args(false)->capture_default_str();
  r->add_option("--m", rate.m, "Batch sizes")->delimiter(',')->allow_extra_args(false)->capture_default_str();
  r->add_option("--k", rate.k, "Numbers of sampled pairs")->delimiter(',')->allow_extra_args(false)->capture_default_str();
  r->add_option("--reps", rate.reps, "Repetitions per grid point")->check(CLI::PositiveNumber)->capture_default_str();
  r->add_option("--delta", rate.delta, "Bound confidence")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  r->add_option("--generator", rate.generator, "uniform or gaussian_mixture")
      ->check(CLI::IsMember({"uniform", "gaussian_mixture"}))
      ->capture_default_str();
  r->add_option("--dim", rate.dim, "Dimension of generated clouds")->check(CLI::PositiveNumber)->capture_default_str();
  r->add_option("--reference-draws", rate.reference_draws, "Minimum draws of the surrogate reference")
      ->capture_default_str();
  r->add_option("--enumeration-cap", rate.cap, "Largest number of batch pairs to enumerate")->capture_default_str();
  add_solver_options(r, rate.solver);
  r->callback([&] { action = [&] { cmd_rate(state, rate); }; });

  FlowOpts flow;
  auto* f = app.add_subcommand("flow", "Minibatch gradient flow of source points toward a target");
  f->add_option("source", flow.source, "Moving cloud")->required();
  f->add_option("target", flow.target, "Fixed target cloud")->required();
  f->add_option("--step", flow.config.step_size, "Euler step size")->check(CLI::NonNegativeNumber)->capture_default_str();
  f->add_option("--iters", flow.config.iters, "Number of steps")->check(CLI::PositiveNumber)->capture_default_str();
  f->add_option("--m", flow.config.batches.m, "Batch size")->check(CLI::PositiveNumber)->capture_default_str();
  f->add_option("--k", flow.config.batches.k, "Batch pairs per step")->check(CLI::PositiveNumber)->capture_default_str();
  f->add_option("--record-every", flow.config.record_every, "Snapshot interval")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  f->add_flag("--unscaled", flow.unscaled, "Do not multiply the gradient by m");
  add_solver_options(f, flow.solver);
  f->callback([&] { action = [&] { cmd_flow(state, flow); }; });

  ColorOpts color;
  auto* c = app.add_subcommand("color", "Minibatch color transfer between two images, both directions");
  c->add_option("image1", color.image1, "First image (PNG or PPM)")->required();
  c->add_option("image2", color.image2, "Second image (PNG or PPM)")->required();
  c->add_option("--m", color.m, "Pixels per batch")->check(CLI::PositiveNumber)->capture_default_str();
  c->add_option("--k", color.k, "Batch pairs")->check(CLI::PositiveNumber)->capture_default_str();
  c->add_option("--normalization", color.normalization, "per_pixel_mass or draw_scaling")
      ->check(CLI::IsMember({"per_pixel_mass", "draw_scaling"}))
      ->capture_default_str();
  c->add_option("--ext", color.extension, "Output extension (default: that of image1)");
  c->add_flag("--mass-csv", color.mass_csv, "Also write per-pixel mass (pixel_index,mass)");
  add_solver_options(c, color.solver);
  c->callback([&] { action = [&] { cmd_color(state, color); }; });

  BenchOpts bench;
  auto* b = app.add_subcommand("bench", "Wall-clock timing of minibatch and full solvers");
  b->add_option("--solvers", bench.solvers, "minibatch, sinkhorn, exact")
      ->check(CLI::IsMember({"minibatch", "sinkhorn", "exact"}))
      ->delimiter(',')->allow_extra_args(false)
      ->capture_default_str();
  b->add_option("--sizes", bench.sizes, "Cloud sizes")->delimiter(',')->allow_extra_args(false)->capture_default_str();
  b->add_option("--reps", bench.reps, "Repetitions")->check(CLI::PositiveNumber)->capture_default_str();
  b->add_option("--dim", bench.dim, "Dimension")->check(CLI::PositiveNumber)->capture_default_str();
  b->add_option("--m", bench.m, "Minibatch size")->check(CLI::PositiveNumber)->capture_default_str();
  b->add_option("--k", bench.k, "Minibatch pairs")->check(CLI::PositiveNumber)->capture_default_str();
  add_solver_options(b, bench.solver);
  b->callback([&] { action = [&] { cmd_bench(state, bench); }; });

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& ex) {
    const int code = app.exit(ex, out, err);
    return code == 0 ? kOk : kUsage;
  }

  state.subcommand = app.get_subcommands().front()->get_name();
  state.global = g;
  state.dir = g.out_dir;
  const auto t0 = std::chrono::steady_clock::now();
  int status = kOk;
  std::string error;
  try {
    fs::create_directories(state.dir);
    action();
    if (state.diverged) {
      status = kDiverged;
      err << "mbot: gradient flow diverged\n";
    } else if (state.not_converged && !g.allow_nonconverged) {
      status = kNotConverged;
      err << "mbot: a Sinkhorn solve did not reach tolerance (raise --max-iters or pass --allow-nonconverged)\n";
    }
  } catch (const CLI::ValidationError& ex) {
    status = kUsage;
    error = ex.what();
  } catch (const std::exception& ex) {
    status = kError;
    error = ex.what();
  }
  if (!error.empty()) err << "mbot " << state.subcommand << ": " << error << '\n';
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  try {
    write_manifest(state, secs, status, error);
  } catch (const std::exception& ex) {
    err << "mbot: " << ex.what() << '\n';
    return kError;
  }
  return status;
}

}  // namespace mbot::cli
