#include "cli.hpp"

#include "ptctr/baselines.hpp"
#include "ptctr/vin.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <thread>

#include <fmt/chrono.h>
#include <fmt/core.h>
#include <fmt/ostream.h>

namespace ptctr::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char* kVersion = "0.1.0";

std::string utc_now() {
  return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(std::chrono::system_clock::now()));
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t");
  return s.substr(first, last - first + 1);
}

// Serialised verbatim into every report.
struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  std::vector<std::string> problems;
  std::vector<long> dimensions;
  std::vector<std::string> solvers;
  json config = json::object();
  std::optional<std::uint64_t> seed;
  std::map<std::string, std::string> outputs;
  std::string started_at;
  std::string finished_at;
  unsigned workers = 1;

  json to_json() const {
    json j{{"command", command},   {"argv", argv},
           {"problems", problems}, {"dimensions", dimensions},
           {"solvers", solvers},   {"config", config},
           {"outputs", outputs},   {"started_at", started_at},
           {"finished_at", finished_at}, {"workers", workers},
           {"version", kVersion}};
    j["seed"] = seed ? json(*seed) : json(nullptr);
    return j;
  }
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream file(path, std::ios::binary);
  if (!file) throw std::runtime_error(fmt::format("cannot write {}", path.string()));
  file << text;
}

// Runs jobs(0..count-1) on a small pool; each job owns its result slot.
template <typename Job>
void run_pool(std::size_t count, unsigned workers, Job&& job) {
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) job(i);
  };
  std::vector<std::thread> threads;
  for (unsigned t = 1; t < workers; ++t) threads.emplace_back(worker);
  worker();
  for (std::thread& t : threads) t.join();
}

// ---------------------------------------------------------------------------
// bench

struct BenchJob {
  int id = 0;
  Index n = 0;
  vin::Method solver = vin::Method::Ptctr;
};

struct BenchRow {
  BenchJob job;
  Index m = 0;
  SolveReport report;
  std::string error;
};

struct BenchOptions {
  std::string problems;
  std::optional<long> n;
  std::string scale;
  std::string solvers = "ptctr";
  std::string out = "results";
  unsigned workers = 0;
  double epsilon = 1e-6;
  int max_iterations = 500;
};

bool row_ok(const BenchRow& row) {
  if (!row.error.empty()) return false;
  if (row.report.converged()) return true;
  return row.job.solver == vin::Method::Penalty && row.report.close &&
         problems::table_entry(row.job.id, problems::Scale::Paper1000).pfm_close;
}

int cmd_bench(const BenchOptions& opt, const std::vector<std::string>& args, std::ostream& out,
              std::ostream& err) {
  RunManifest manifest;
  manifest.command = "bench";
  manifest.argv = args;
  manifest.started_at = utc_now();

  const std::vector<int> ids = parse_problem_list(opt.problems);
  std::vector<vin::Method> solvers;
  for (const std::string& name : split_list(opt.solvers)) solvers.push_back(vin::parse_method(name));
  if (solvers.empty()) throw InvalidInput("no solver given");
  if (opt.n && !opt.scale.empty()) throw InvalidInput("--n and --n-scale are mutually exclusive");

  std::optional<problems::Scale> scale;
  if (!opt.scale.empty()) {
    if (opt.scale == "paper1000") {
      scale = problems::Scale::Paper1000;
    } else if (opt.scale == "paper5000") {
      scale = problems::Scale::Paper5000;
    } else {
      throw InvalidInput(fmt::format("unknown scale '{}' (expected paper1000 or paper5000)", opt.scale));
    }
  }
  if (!opt.n && !scale) scale = problems::Scale::Paper1000;

  std::vector<BenchJob> jobs;
  for (int id : ids) {
    const Index n = opt.n ? static_cast<Index>(*opt.n) : problems::paper_dimension(id, *scale);
    const Index multiple = problems::block_multiple(id);
    if (n < multiple || n % multiple != 0) {
      throw InvalidInput(fmt::format("{} needs n divisible by {}, got {}", problems::example_name(id),
                                     multiple, n));
    }
    manifest.problems.push_back(problems::example_name(id));
    manifest.dimensions.push_back(static_cast<long>(n));
    for (vin::Method s : solvers) jobs.push_back({id, n, s});
  }
  for (vin::Method s : solvers) manifest.solvers.push_back(vin::method_name(s));
  manifest.config = {{"epsilon", opt.epsilon},
                     {"max_iterations", opt.max_iterations},
                     {"scale", opt.scale.empty() ? json(nullptr) : json(opt.scale)}};
  manifest.workers = worker_count(opt.workers, jobs.size());

  SolverConfig config;
  config.epsilon = opt.epsilon;
  config.max_iterations = opt.max_iterations;
  config.record_history = false;
  config.validate();
  baselines::PenaltyConfig penalty;
  penalty.kkt_tol = opt.epsilon;
  baselines::FlowConfig flow;
  flow.tolerance = opt.epsilon;

  std::vector<BenchRow> rows(jobs.size());
  run_pool(jobs.size(), manifest.workers, [&](std::size_t i) {
    BenchRow& row = rows[i];
    row.job = jobs[i];
    try {
      const ObjectiveProblem problem = problems::make_example(row.job.id, row.job.n);
      row.m = problem.constraints.rows();
      switch (row.job.solver) {
        case vin::Method::Ptctr:
          row.report = solve(problem, config);
          break;
        case vin::Method::Penalty:
          row.report = baselines::penalty_solve(problem, penalty);
          break;
        case vin::Method::GradientFlow:
          row.report = baselines::gradient_flow_solve(problem, flow);
          break;
      }
    } catch (const std::exception& e) {
      row.error = e.what();
    }
  });

  const fs::path dir(opt.out);
  const fs::path csv_path = dir / "bench.csv";
  const fs::path json_path = dir / "bench.json";
  manifest.outputs = {{"csv", csv_path.string()}, {"json", json_path.string()}};

  std::ostringstream csv;
  csv << "problem,n,m,solver,steps,accepted,rejected,f_star,kkt_residual,feasibility_residual,"
         "elapsed_seconds,status,close\n";
  json json_rows = json::array();
  bool all_ok = true;
  for (const BenchRow& row : rows) {
    const SolveReport& r = row.report;
    const std::string status = row.error.empty() ? std::string(to_string(r.status)) : "Error";
    const std::string problem = problems::example_name(row.job.id);
    const std::string solver = vin::method_name(row.job.solver);
    fmt::print(csv, "{},{},{},{},{},{},{},{:.9e},{:.3e},{:.3e},{:.3f},{},{}\n", problem, row.job.n,
               row.m, solver, r.iterations, r.accepted_steps, r.rejected_steps, r.f_star,
               r.kkt_residual, r.feasibility_residual, r.elapsed_seconds, status,
               r.close ? "true" : "false");
    json_rows.push_back({{"problem", problem},
                         {"n", row.job.n},
                         {"m", row.m},
                         {"solver", solver},
                         {"steps", r.iterations},
                         {"accepted", r.accepted_steps},
                         {"rejected", r.rejected_steps},
                         {"f_star", r.f_star},
                         {"kkt_residual", r.kkt_residual},
                         {"feasibility_residual", r.feasibility_residual},
                         {"elapsed_seconds", r.elapsed_seconds},
                         {"status", status},
                         {"close", r.close},
                         {"note", row.error.empty() ? r.note : row.error}});
    const bool ok = row_ok(row);
    all_ok = all_ok && ok;
    fmt::print(out, "{:<5} n={:<5} {:<8} {:<16} f*={:.9e} steps={:<4} kkt={:.2e} feas={:.2e} {:.2f}s{}\n",
               problem, row.job.n, solver, status, r.f_star, r.accepted_steps, r.kkt_residual,
               r.feasibility_residual, r.elapsed_seconds, r.close ? " (close)" : "");
    if (!row.error.empty()) fmt::print(err, "{} {}: {}\n", problem, solver, row.error);
  }

  manifest.finished_at = utc_now();
  const json report{{"manifest", manifest.to_json()},
                    {"rows", json_rows},
                    {"all_converged", all_ok}};
  write_text(csv_path, csv.str());
  write_text(json_path, report.dump(2) + "\n");
  fmt::print(out, "wrote {} and {}\n", csv_path.string(), json_path.string());
  return all_ok ? kExitOk : kExitNotConverged;
}

// ---------------------------------------------------------------------------
// vin

struct VinOptions {
  int trajectory = 1;
  int frames = 7200;
  int first_frame = 1;
  std::string noise = "off";
  std::uint64_t seed = 42;
  std::string solver = "ptctr";
  std::string out = "results";
  double angle_half_width = 0.2;
};

int cmd_vin(const VinOptions& opt, const std::vector<std::string>& args, std::ostream& out) {
  RunManifest manifest;
  manifest.command = "vin";
  manifest.argv = args;
  manifest.started_at = utc_now();

  if (opt.noise != "on" && opt.noise != "off") {
    throw InvalidInput(fmt::format("--noise must be on or off, got '{}'", opt.noise));
  }
  const vin::Method method = vin::parse_method(opt.solver);
  vin::VinParams params;
  params.frames = opt.frames;
  std::optional<vin::NoiseModel> noise;
  if (opt.noise == "on") {
    noise = vin::NoiseModel{};
    noise->seed = opt.seed;
    noise->angle_half_width = opt.angle_half_width;
    manifest.seed = opt.seed;
  }
  vin::SimulationOptions sim;
  sim.first_frame = opt.first_frame;

  manifest.problems = {fmt::format("trj{}", opt.trajectory)};
  manifest.dimensions = {17};
  manifest.solvers = {vin::method_name(method)};
  manifest.config = {{"frames", opt.frames},
                     {"first_frame", opt.first_frame},
                     {"noise", opt.noise},
                     {"angle_half_width", opt.angle_half_width},
                     {"epsilon", sim.epsilon},
                     {"max_iterations", sim.max_iterations}};

  const vin::VinEstimate est = vin::simulate(opt.trajectory, params, noise, method, sim);

  const fs::path dir(opt.out);
  const fs::path csv_path = dir / fmt::format("vin_trj{}.csv", opt.trajectory);
  const fs::path json_path = dir / fmt::format("vin_trj{}.json", opt.trajectory);
  manifest.outputs = {{"csv", csv_path.string()}, {"json", json_path.string()}};

  std::ostringstream csv;
  vin::write_csv(csv, est);

  std::map<std::string, int> status_counts;
  int min_iters = std::numeric_limits<int>::max();
  int max_iters = 0;
  double sum_iters = 0.0;
  Index min_rank = std::numeric_limits<Index>::max();
  Index max_rank = 0;
  bool acceptable = true;
  for (const vin::FrameResult& f : est.frames) {
    ++status_counts[f.status];
    min_iters = std::min(min_iters, f.iterations);
    max_iters = std::max(max_iters, f.iterations);
    sum_iters += f.iterations;
    min_rank = std::min(min_rank, f.rank);
    max_rank = std::max(max_rank, f.rank);
    acceptable = acceptable &&
                 (f.status == "Converged" || (f.status == "IterationLimit" && f.feasible));
  }
  const double frames = static_cast<double>(est.frames.size());
  manifest.finished_at = utc_now();
  const json summary{
      {"manifest", manifest.to_json()},
      {"trajectory", opt.trajectory},
      {"frames", est.frames.size()},
      {"noise", opt.noise == "on"},
      {"solver", vin::method_name(method)},
      {"max_error", est.max_error()},
      {"mean_error", est.mean_error()},
      {"final_error", est.frames.empty() ? 0.0 : est.frames.back().error},
      {"total_seconds", est.elapsed_seconds},
      {"iterations",
       {{"min", est.frames.empty() ? 0 : min_iters},
        {"max", max_iters},
        {"mean", frames > 0 ? sum_iters / frames : 0.0}}},
      {"rank", {{"min", est.frames.empty() ? 0 : min_rank}, {"max", max_rank}}},
      {"status_counts", status_counts},
      {"all_frames_acceptable", acceptable}};

  write_text(csv_path, csv.str());
  write_text(json_path, summary.dump(2) + "\n");
  fmt::print(out, "trj{} frames={} max_err={:.6e} mean_err={:.6e} time={:.2f}s\n", opt.trajectory,
             est.frames.size(), est.max_error(), est.mean_error(), est.elapsed_seconds);
  for (const auto& [status, count] : status_counts) fmt::print(out, "  {}: {}\n", status, count);
  fmt::print(out, "wrote {} and {}\n", csv_path.string(), json_path.string());
  return acceptable ? kExitOk : kExitNotConverged;
}

// ---------------------------------------------------------------------------
// conditioning

struct ConditioningOptions {
  std::string problem = "ex1";
  long n = 4;
  std::string sigmas = "1,10,100,1000,1e4,1e5,1e6,1e7,1e8";
  std::string out;
};

int cmd_conditioning(const ConditioningOptions& opt, std::ostream& out, std::ostream& err) {
  const int id = problems::parse_example_id(opt.problem);
  std::vector<double> sigmas;
  for (const std::string& token : split_list(opt.sigmas)) {
    std::size_t used = 0;
    double value = 0.0;
    try {
      value = std::stod(token, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != token.size()) throw InvalidInput(fmt::format("bad sigma '{}'", token));
    sigmas.push_back(value);
  }
  if (sigmas.empty()) throw InvalidInput("empty sigma list");

  const ObjectiveProblem problem = problems::make_example(id, static_cast<Index>(opt.n));
  const auto samples = baselines::penalty_conditioning(problem, sigmas);

  std::ostringstream csv;
  csv << "sigma,condition\n";
  for (const auto& s : samples) fmt::print(csv, "{:.6e},{:.9e}\n", s.sigma, s.condition);
  out << csv.str();
  if (!opt.out.empty()) write_text(opt.out, csv.str());

  if (!std::is_sorted(sigmas.begin(), sigmas.end())) {
    fmt::print(err, "warning: sigma list is not sorted; monotonicity check skipped\n");
  } else {
    for (std::size_t i = 1; i < samples.size(); ++i) {
      if (samples[i].condition < samples[i - 1].condition) {
        fmt::print(err, "warning: condition decreases between sigma={} and sigma={}\n",
                   samples[i - 1].sigma, samples[i].sigma);
      }
    }
  }
  return kExitOk;
}

}  // namespace

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream stream(text);
  std::string token;
  while (std::getline(stream, token, ',')) {
    token = trim(token);
    if (!token.empty()) out.push_back(token);
  }
  return out;
}

std::vector<int> parse_problem_list(const std::string& spec) {
  std::vector<int> ids;
  for (const std::string& token : split_list(spec)) {
    const auto dots = token.find("..");
    if (dots == std::string::npos) {
      ids.push_back(problems::parse_example_id(token));
      continue;
    }
    const int lo = problems::parse_example_id(trim(token.substr(0, dots)));
    const int hi = problems::parse_example_id(trim(token.substr(dots + 2)));
    if (lo > hi) throw InvalidInput(fmt::format("empty problem range '{}'", token));
    for (int id = lo; id <= hi; ++id) ids.push_back(id);
  }
  if (ids.empty()) throw InvalidInput("empty problem list");
  return ids;
}

unsigned worker_count(unsigned requested, std::size_t jobs) {
  unsigned count = requested > 0 ? requested : std::max(1u, std::thread::hardware_concurrency());
  if (const char* cap = std::getenv("PTCTR_MAX_WORKERS")) {
    try {
      const int value = std::stoi(cap);
      if (value >= 1) count = std::min(count, static_cast<unsigned>(value));
    } catch (const std::exception&) {
      // ignore malformed caps
    }
  }
  if (jobs > 0) count = std::min<unsigned>(count, static_cast<unsigned>(jobs));
  return std::max(1u, count);
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Continuation solver with trust-region time-stepping", "ptctr"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  BenchOptions bench;
  CLI::App* bench_cmd = app.add_subcommand("bench", "Run benchmark problems");
  bench_cmd->add_option("--problems", bench.problems, "Problem ids, e.g. ex1..ex10 or ex1,ex3")
      ->required();
  bench_cmd->add_option("--n", bench.n, "Dimension used for every problem");
  bench_cmd->add_option("--n-scale", bench.scale, "Dimension preset: paper1000 or paper5000");
  bench_cmd->add_option("--solver", bench.solvers, "Comma list of ptctr, penalty, flow");
  bench_cmd->add_option("--out", bench.out, "Output directory");
  bench_cmd->add_option("--workers", bench.workers, "Worker threads (0 = hardware)");
  bench_cmd->add_option("--epsilon", bench.epsilon, "KKT tolerance");
  bench_cmd->add_option("--max-iterations", bench.max_iterations, "Ptctr iteration cap");

  VinOptions vin_opt;
  CLI::App* vin_cmd = app.add_subcommand("vin", "Visual-inertial localization simulation");
  vin_cmd->add_option("--trajectory", vin_opt.trajectory, "Trajectory id 1, 2 or 3")
      ->check(CLI::Range(1, 3));
  vin_cmd->add_option("--frames", vin_opt.frames, "Frames to simulate")->check(CLI::Range(2, 1000000));
  vin_cmd->add_option("--first-frame", vin_opt.first_frame, "Index of the first frame")
      ->check(CLI::PositiveNumber);
  vin_cmd->add_option("--noise", vin_opt.noise, "on or off");
  vin_cmd->add_option("--seed", vin_opt.seed, "Noise seed");
  vin_cmd->add_option("--angle-noise", vin_opt.angle_half_width,
                      "Half width of the line-of-sight error, radians");
  vin_cmd->add_option("--solver", vin_opt.solver, "ptctr, penalty or flow");
  vin_cmd->add_option("--out", vin_opt.out, "Output directory");

  ConditioningOptions cond;
  CLI::App* cond_cmd = app.add_subcommand("conditioning", "Penalty Hessian condition numbers");
  cond_cmd->add_option("--problem", cond.problem, "Problem id");
  cond_cmd->add_option("--n", cond.n, "Dimension");
  cond_cmd->add_option("--sigmas", cond.sigmas, "Comma list of penalty parameters");
  cond_cmd->add_option("--out", cond.out, "Optional CSV output path");

  std::string replay_path;
  CLI::App* replay_cmd = app.add_subcommand("replay", "Re-run the command stored in a report");
  replay_cmd->add_option("--manifest", replay_path, "JSON report written by bench or vin")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    if (bench_cmd->parsed()) return cmd_bench(bench, args, out, err);
    if (vin_cmd->parsed()) return cmd_vin(vin_opt, args, out);
    if (cond_cmd->parsed()) return cmd_conditioning(cond, out, err);
    if (replay_cmd->parsed()) {
      std::ifstream file(replay_path);
      if (!file) throw InvalidInput(fmt::format("cannot read {}", replay_path));
      const json report = json::parse(file);
      const auto stored = report.at("manifest").at("argv").get<std::vector<std::string>>();
      if (!stored.empty() && stored.front() == "replay") {
        throw InvalidInput("refusing to replay a replay");
      }
      return run(stored, out, err);
    }
  } catch (const InvalidInput& e) {
    fmt::print(err, "error: {}\n", e.what());
    return kExitUsage;
  } catch (const json::exception& e) {
    fmt::print(err, "error: {}\n", e.what());
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace ptctr::cli
