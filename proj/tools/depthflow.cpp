// depthflow: command-line pipeline over activation trajectories.
//
//   depthflow gen      --config teacher.json --out DIR [--samples N] [--seed S]
//   depthflow simmat   --in traj.atrj --out DIR [--role ROLES]
//   depthflow segment  --in traj.atrj --out DIR --k K [--min-len M] [--baselines N] [--seed S]
//   depthflow fit      --in traj.atrj --partition p.json --config train.json --out DIR [--seed S]
//   depthflow dynamics --in traj.atrj [--checkpoint model.ckpt] --out DIR
//   depthflow dmd      --in traj.atrj [--checkpoint model.ckpt] --out DIR [--rank R] [--role ROLES]
//   depthflow compare  --in teacher.atrj (--checkpoint model.ckpt | --student s.atrj) --out DIR
//   depthflow replay   --manifest DIR/manifest.json [--out DIR2]
//
// Every command writes DIR/manifest.json. Exit codes: 0 ok, 2 usage, 3 data,
// 4 numerical failure.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "depthflow/depthflow.hpp"

#ifndef DEPTHFLOW_VERSION
#define DEPTHFLOW_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace depthflow;

namespace {

std::uint64_t fnv1a(std::span<const unsigned char> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

class Manifest {
 public:
  Manifest(std::string command, std::vector<std::string> argv)
      : command_(std::move(command)), argv_(std::move(argv)), start_(std::chrono::steady_clock::now()) {}

  json config = json::object();
  json seeds = json::object();

  void input(const std::string& path) {
    const auto bytes = read_bytes(path);
    inputs_.push_back({{"path", path}, {"bytes", bytes.size()}, {"fnv1a64", hex64(fnv1a(bytes))}});
  }

  std::string output(const fs::path& dir, const std::string& name) {
    const std::string p = (dir / name).string();
    outputs_.push_back(p);
    return p;
  }

  void write(const fs::path& dir) const {
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    json outs = json::array();
    for (const auto& p : outputs_) {
      const auto bytes = read_bytes(p);
      outs.push_back({{"path", p}, {"bytes", bytes.size()}, {"fnv1a64", hex64(fnv1a(bytes))}});
    }
    const json m = {{"tool", "depthflow"},
                    {"version", DEPTHFLOW_VERSION},
                    {"command", command_},
                    {"argv", argv_},
                    {"config", config},
                    {"seeds", seeds},
                    {"inputs", inputs_},
                    {"outputs", outs},
                    {"wall_clock_seconds", seconds}};
    write_text((dir / "manifest.json").string(), m.dump(2) + "\n");
  }

 private:
  std::string command_;
  std::vector<std::string> argv_;
  json inputs_ = json::array();
  std::vector<std::string> outputs_;
  std::chrono::steady_clock::time_point start_;
};

json read_json(const std::string& path, bool is_config) {
  const std::string text = read_text(path);
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    const std::string msg = path + ": invalid JSON: " + e.what();
    if (is_config) throw UsageError(msg);
    throw DataError(msg);
  }
}

RoleSet parse_roles(const std::string& spec, const Trajectory& t) {
  if (spec.empty() || spec == "all") return t.present_roles();
  RoleSet out;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const TokenRole r = parse_role(item);
    if (!t.present_roles().contains(r))
      throw UsageError("role '" + item + "' has no tokens in this trajectory");
    out.insert(r);
  }
  if (out.empty()) throw UsageError("empty role list");
  return out;
}

fs::path prepare_out(const std::string& out) {
  if (out.empty()) throw UsageError("--out is required");
  fs::create_directories(out);
  return fs::path(out);
}

std::string similarity_csv(const la::Matrix& s, std::size_t first_layer) {
  std::vector<std::string> header{"layer"};
  for (std::size_t j = 0; j < s.cols(); ++j) header.push_back(std::to_string(first_layer + j));
  CsvTable csv(header);
  for (std::size_t i = 0; i < s.rows(); ++i) {
    csv.row().add(first_layer + i);
    for (std::size_t j = 0; j < s.cols(); ++j) csv.add(s(i, j));
  }
  return csv.str();
}

json score_summary(const std::vector<double>& scores) {
  double mean = 0.0, var = 0.0;
  for (double x : scores) mean += x;
  if (!scores.empty()) mean /= static_cast<double>(scores.size());
  for (double x : scores) var += (x - mean) * (x - mean);
  const double sd = scores.size() > 1 ? std::sqrt(var / static_cast<double>(scores.size() - 1)) : 0.0;
  return {{"scores", scores}, {"mean", mean}, {"std", sd}};
}

// ---------------------------------------------------------------------------
// Options shared by subcommands

struct Options {
  std::string in, out, config, partition, checkpoint, student, manifest, role, dtype = "f64", score = "mean";
  std::optional<std::uint64_t> seed;
  std::size_t samples = 16, k = 0, min_len = 1, baselines = 10, rank = kDefaultDmdRank;
  double epsilon = 1e-3;
  bool pooled = false;
};

// ---------------------------------------------------------------------------
// Commands

void cmd_gen(const Options& o, Manifest& man) {
  if (o.config.empty()) throw UsageError("gen: --config is required");
  json spec_json = read_json(o.config, true);
  man.input(o.config);
  if (o.seed) spec_json["seed"] = *o.seed;
  const auto spec = teacher_spec_from_json(spec_json);
  const Dtype dtype = o.dtype == "f32" ? Dtype::f32 : o.dtype == "f64" ? Dtype::f64 : throw UsageError("--dtype must be f32 or f64");
  const auto dir = prepare_out(o.out);
  const auto [traj, partition] = generate_teacher(spec, o.samples);
  man.config = {{"spec", spec_json}, {"samples", o.samples}, {"dtype", o.dtype}};
  man.seeds = {{"teacher", spec.seed}};
  write_trajectory(traj, man.output(dir, "trajectory.atrj"), dtype);
  write_text(man.output(dir, "partition.json"), json(partition).dump(2) + "\n");
}

void cmd_simmat(const Options& o, Manifest& man) {
  const Trajectory t = read_trajectory(o.in);
  man.input(o.in);
  const auto roles = parse_roles(o.role, t);
  const auto dir = prepare_out(o.out);
  const auto s = similarity_matrix(t, roles);
  man.config = {{"role", o.role.empty() ? "all" : o.role}};
  write_text(man.output(dir, "similarity.csv"), similarity_csv(s, 0));
  write_text(man.output(dir, "similarity.svg"), heatmap_svg(s, {}, "layer similarity (layers 0.." + std::to_string(t.depth()) + ")"));
}

void cmd_segment(const Options& o, Manifest& man) {
  const Trajectory t = read_trajectory(o.in);
  man.input(o.in);
  const auto roles = parse_roles(o.role, t);
  if (o.k < 1) throw UsageError("segment: --k must be >= 1");
  if (o.k > t.depth())
    throw UsageError("segment: k = " + std::to_string(o.k) + " exceeds the number of layers " + std::to_string(t.depth()));
  const SegmentScore kind = o.score == "mean" ? SegmentScore::mean
                            : o.score == "offdiag" ? SegmentScore::offdiag_mean
                                                   : throw UsageError("--score must be mean or offdiag");
  const auto dir = prepare_out(o.out);
  const std::uint64_t seed = o.seed.value_or(0);
  const auto s = drop_leading_layers(similarity_matrix(t, roles));
  const Partition best = maxcut_segment(s, o.k, o.min_len, kind);
  json baselines = {{"maxcut_score", best.score}, {"k", o.k}};
  double contiguous_mean = 0.0, contiguous_std = 0.0;
  for (const bool contiguous : {true, false}) {
    const auto parts = random_partitions(s.rows(), o.k, contiguous, o.baselines,
                                         contiguous ? seed : Rng::derive(seed, 1), &best);
    std::vector<double> scores;
    for (const auto& p : parts) scores.push_back(partition_score(s, p, kind));
    auto summary = score_summary(scores);
    if (contiguous) {
      contiguous_mean = summary["mean"];
      contiguous_std = summary["std"];
    }
    baselines[contiguous ? "contiguous" : "shuffled"] = summary;
  }
  baselines["maxcut_at_least_contiguous_mean_plus_std"] = best.score >= contiguous_mean + contiguous_std;
  man.config = {{"k", o.k}, {"min_len", o.min_len}, {"baselines", o.baselines}, {"role", o.role.empty() ? "all" : o.role}, {"score", o.score}};
  man.seeds = {{"baselines", seed}};
  std::vector<std::pair<std::size_t, std::size_t>> boxes;
  for (const auto& seg : best.segments) boxes.emplace_back(seg.begin - 1, seg.end - 1);
  write_text(man.output(dir, "partition.json"), json(best).dump(2) + "\n");
  write_text(man.output(dir, "baselines.json"), baselines.dump(2) + "\n");
  write_text(man.output(dir, "similarity.csv"), similarity_csv(s, 1));
  write_text(man.output(dir, "heatmap.svg"), heatmap_svg(s, boxes, "layers 1.." + std::to_string(t.depth()) + ", max-cut k=" + std::to_string(o.k)));
}

TrainConfig train_config_from_json(const json& j, Stage stage, std::uint64_t seed) {
  TrainConfig c;
  c.stage = stage;
  c.seed = seed;
  if (j.contains("lambda")) c.lambda_initial = j.at("lambda").get<double>();
  c.anneal = j.value("anneal", c.anneal);
  c.anneal_fraction = j.value("anneal_fraction", c.anneal_fraction);
  if (j.contains("token_weights")) {
    const auto w = j.at("token_weights").get<std::vector<double>>();
    if (w.size() != 3) throw UsageError("token_weights needs three entries (cls, register, patch)");
    c.token_weights = TokenWeights{w[0], w[1], w[2]};
  }
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.momentum = j.value("momentum", c.momentum);
  c.steps = j.value("steps", c.steps);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.log_every = j.value("log_every", c.log_every);
  c.validate();
  return c;
}

void cmd_fit(const Options& o, Manifest& man) {
  if (o.partition.empty() || o.config.empty()) throw UsageError("fit: --partition and --config are required");
  const Trajectory t = read_trajectory(o.in);
  man.input(o.in);
  const json pj = read_json(o.partition, false);
  man.input(o.partition);
  json cj = read_json(o.config, true);
  man.input(o.config);
  Partition schedule;
  try {
    schedule = pj.get<Partition>();
  } catch (const json::exception& e) {
    throw DataError(o.partition + ": malformed partition: " + e.what());
  }
  if (!schedule.contiguous()) throw UsageError("fit: the schedule partition must be contiguous");
  if (schedule.n() != t.depth())
    throw UsageError("fit: partition covers " + std::to_string(schedule.n()) + " layers, trajectory has " + std::to_string(t.depth()));
  const auto dir = prepare_out(o.out);
  const std::uint64_t seed = o.seed.value_or(cj.value("seed", std::uint64_t{0}));
  cj["seed"] = seed;
  ModelShape shape;
  TrainConfig s1, s2;
  std::optional<TrainConfig> stage2;
  try {
    const json model = cj.value("model", json::object());
    shape.family = parse_family(model.value("family", std::string("affine")));
    shape.hidden = model.value("hidden", shape.hidden);
    shape.depth_scale = model.value("depth_scale", shape.depth_scale);
    s1 = train_config_from_json(cj.value("stage1", json::object()), Stage::stage1, seed);
    if (cj.contains("stage2")) stage2 = train_config_from_json(cj.at("stage2"), Stage::stage2, seed);
  } catch (const json::exception& e) {
    throw UsageError(o.config + ": " + e.what());
  }
  man.config = cj;
  man.seeds = {{"init", seed}};

  std::vector<std::string> header{"stage", "block", "step", "lambda", "tf_loss", "ar_loss", "total"};
  for (std::size_t l = 1; l <= t.depth(); ++l) header.push_back("err_l" + std::to_string(l));
  CsvTable log(header);
  auto logger = [&](const TrainLogRow& r) {
    log.row()
        .add(std::string(r.stage == Stage::stage1 ? "stage1" : "stage2"))
        .add(r.block)
        .add(r.step)
        .add(r.lambda)
        .add(r.tf_loss)
        .add(r.ar_loss)
        .add(r.total);
    for (double e : r.layer_error) log.add(e);
  };
  SurrogateModel m = train_stage1(t, schedule, s1, shape, logger);
  if (stage2) m = train_stage2(std::move(m), t, *stage2, logger);

  const auto err = relative_errors(m, t);
  const auto cos = layer_cosines(rollout_trajectory(m, t), t);
  CsvTable eval({"layer", "relative_error", "cosine"});
  for (std::size_t l = 0; l < err.size(); ++l) eval.row().add(l).add(err[l]).add(cos[l]);
  write_checkpoint(m, seed, man.output(dir, "model.ckpt"), cj);
  write_text(man.output(dir, "train_log.csv"), log.str());
  write_text(man.output(dir, "eval.csv"), eval.str());
}

Trajectory subject_trajectory(const Options& o, Manifest& man, std::optional<SurrogateModel>& model) {
  Trajectory t = read_trajectory(o.in);
  man.input(o.in);
  if (o.checkpoint.empty()) return t;
  auto ck = read_checkpoint(o.checkpoint);
  man.input(o.checkpoint);
  if (ck.model.dim != t.dim()) throw UsageError("checkpoint dimension does not match the trajectory");
  model = std::move(ck.model);
  return rollout_trajectory(*model, t);
}

void cmd_dynamics(const Options& o, Manifest& man) {
  std::optional<SurrogateModel> model;
  const Trajectory t = subject_trajectory(o, man, model);
  const auto dir = prepare_out(o.out);
  const auto rep = dynamics_report(t);
  man.config = {{"source", model ? "checkpoint rollout" : "trajectory"}, {"epsilon", o.epsilon}};
  write_text(man.output(dir, "dynamics.csv"), to_csv(rep));
  write_text(man.output(dir, "dynamics.json"), to_json(rep).dump(2) + "\n");
  std::vector<Series> gamma, speed;
  for (TokenRole r : t.present_roles()) {
    gamma.push_back({std::string(role_name(r)), rep.column(r, &DynamicsRow::gamma)});
    speed.push_back({std::string(role_name(r)), rep.column(r, &DynamicsRow::angular_speed)});
  }
  write_text(man.output(dir, "gamma.svg"), line_plot_svg(gamma, "directional convergence by layer"));
  write_text(man.output(dir, "angular_speed.svg"), line_plot_svg(speed, "angular speed by layer"));
  if (!model) return;
  const std::uint64_t seed = o.seed.value_or(0);
  man.seeds = {{"perturbation", seed}};
  CsvTable csv({"layer", "role", "scaled_sensitivity"});
  for (std::size_t l = 0; l <= t.depth(); ++l) {
    const auto sens = mean_sensitivity(*model, t, l, o.epsilon, Rng::derive(seed, l));
    for (const auto& [role, v] : sens) csv.row().add(l).add(std::string(role_name(role))).add(v);
  }
  write_text(man.output(dir, "perturbation.csv"), csv.str());
}

void cmd_dmd(const Options& o, Manifest& man) {
  std::optional<SurrogateModel> model;
  const Trajectory t = subject_trajectory(o, man, model);
  const auto roles = parse_roles(o.role, t);
  const auto dir = prepare_out(o.out);
  man.config = {{"rank", o.rank}, {"role", o.role.empty() ? "all" : o.role}, {"pooled", o.pooled},
                {"source", model ? "checkpoint rollout" : "trajectory"}};
  json out = json::object();
  CsvTable csv({"role", "sample", "index", "re", "im", "modulus", "angle"});
  std::vector<la::Complex> cloud;
  for (TokenRole r : roles) {
    const auto groups = group_average(t, r);
    const std::string name(role_name(r));
    std::vector<DmdModel> fits;
    if (o.pooled) {
      fits.push_back(fit_dmd_pooled(groups, o.rank));
    } else {
      for (const auto& g : groups) fits.push_back(fit_dmd(g, o.rank));
    }
    json models = json::array();
    for (std::size_t s = 0; s < fits.size(); ++s) {
      models.push_back(to_json(fits[s]));
      for (std::size_t i = 0; i < fits[s].eigenvalues.size(); ++i) {
        const auto z = fits[s].eigenvalues[i];
        csv.row().add(name).add(o.pooled ? std::string("pooled") : std::to_string(s)).add(i).add(z.real()).add(z.imag()).add(std::abs(z)).add(std::arg(z));
        cloud.push_back(z);
      }
    }
    out[name] = models;
  }
  write_text(man.output(dir, "dmd.json"), out.dump(2) + "\n");
  write_text(man.output(dir, "eigenvalues.csv"), csv.str());
  write_text(man.output(dir, "eigencloud.svg"), eigencloud_svg(cloud, "DMD eigenvalues, rank " + std::to_string(o.rank)));
}

void cmd_compare(const Options& o, Manifest& man) {
  const Trajectory teacher = read_trajectory(o.in);
  man.input(o.in);
  Trajectory student;
  if (!o.checkpoint.empty() == !o.student.empty()) throw UsageError("compare: give exactly one of --checkpoint or --student");
  if (!o.checkpoint.empty()) {
    const auto ck = read_checkpoint(o.checkpoint);
    man.input(o.checkpoint);
    if (ck.model.dim != teacher.dim()) throw UsageError("checkpoint dimension does not match the teacher");
    student = rollout_trajectory(ck.model, teacher);
  } else {
    student = read_trajectory(o.student);
    man.input(o.student);
  }
  if (student.n_samples() != teacher.n_samples() || student.n_layers() != teacher.n_layers() ||
      student.dim() != teacher.dim() || student.roles() != teacher.roles())
    throw UsageError("compare: student and teacher shapes differ");
  const auto dir = prepare_out(o.out);
  const auto roles = parse_roles(o.role, teacher);
  CsvTable csv({"layer", "role", "cosine", "r2"});
  for (std::size_t l = 0; l < teacher.n_layers(); ++l) {
    for (TokenRole r : roles) {
      const auto tokens = teacher.tokens_with(r);
      double cos = 0.0;
      for (std::size_t s = 0; s < teacher.n_samples(); ++s) {
        double acc = 0.0;
        for (std::size_t k : tokens) {
          const auto a = teacher.state(s, l, k);
          const auto b = student.state(s, l, k);
          const double na = la::norm2(a), nb = la::norm2(b);
          if (na == 0.0 || nb == 0.0)
            throw DataError("compare: zero-norm state at sample " + std::to_string(s) + ", layer " + std::to_string(l));
          acc += clamp_cosine(la::dot(a, b) / (na * nb));
        }
        cos += acc / static_cast<double>(tokens.size());
      }
      cos /= static_cast<double>(teacher.n_samples());
      csv.row().add(l).add(std::string(role_name(r))).add(cos).add(alignment_r2(student, teacher, {r}, l));
    }
  }
  man.config = {{"role", o.role.empty() ? "all" : o.role}, {"student", o.checkpoint.empty() ? "trajectory" : "checkpoint rollout"}};
  write_text(man.output(dir, "compare.csv"), csv.str());
}

int run(std::vector<std::string> args);

void cmd_replay(const Options& o) {
  if (o.manifest.empty()) throw UsageError("replay: --manifest is required");
  const json m = read_json(o.manifest, false);
  std::vector<std::string> argv;
  try {
    argv = m.at("argv").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw DataError(o.manifest + ": manifest has no argv: " + e.what());
  }
  if (!o.out.empty()) {
    bool replaced = false;
    for (std::size_t i = 0; i + 1 < argv.size(); ++i)
      if (argv[i] == "--out") {
        argv[i + 1] = o.out;
        replaced = true;
      }
    if (!replaced) throw DataError(o.manifest + ": recorded command has no --out");
  }
  const int rc = run(argv);
  if (rc != 0) throw Error(static_cast<ErrorKind>(rc), "replayed command failed");
}

int run(std::vector<std::string> args) {
  CLI::App app{"depthflow: dynamics of layered activation trajectories"};
  app.require_subcommand(1);
  Options o;
  std::uint64_t seed = 0;

  auto add_io = [&](CLI::App* c) {
    c->add_option("--in", o.in, "input ATRJ trajectory")->required();
    c->add_option("--out", o.out, "output directory")->required();
  };
  auto add_seed = [&](CLI::App* c) { c->add_option("--seed", seed, "random seed"); };

  auto* gen = app.add_subcommand("gen", "generate a synthetic block-recurrent teacher");
  gen->add_option("--config", o.config, "teacher spec JSON")->required();
  gen->add_option("--out", o.out, "output directory")->required();
  gen->add_option("--samples", o.samples, "number of samples")->check(CLI::PositiveNumber);
  gen->add_option("--dtype", o.dtype, "payload type f64|f32");
  add_seed(gen);

  auto* simmat = app.add_subcommand("simmat", "layer-layer cosine similarity matrix");
  add_io(simmat);
  simmat->add_option("--role", o.role, "comma-separated roles (cls,register,patch) or all");

  auto* segment = app.add_subcommand("segment", "max-cut phase segmentation with random baselines");
  add_io(segment);
  segment->add_option("--k", o.k, "number of phases")->required();
  segment->add_option("--min-len", o.min_len, "minimum phase length");
  segment->add_option("--baselines", o.baselines, "random partitions per baseline kind");
  segment->add_option("--role", o.role, "comma-separated roles or all");
  segment->add_option("--score", o.score, "segment score: mean|offdiag");
  add_seed(segment);

  auto* fit = app.add_subcommand("fit", "train a weight-tied surrogate");
  add_io(fit);
  fit->add_option("--partition", o.partition, "partition JSON")->required();
  fit->add_option("--config", o.config, "training config JSON")->required();
  add_seed(fit);

  auto* dynamics = app.add_subcommand("dynamics", "per-layer dynamics report");
  add_io(dynamics);
  dynamics->add_option("--checkpoint", o.checkpoint, "analyse the surrogate rollout from --in layer 0");
  dynamics->add_option("--epsilon", o.epsilon, "perturbation magnitude");
  add_seed(dynamics);

  auto* dmd = app.add_subcommand("dmd", "exact dynamic mode decomposition of group states");
  add_io(dmd);
  dmd->add_option("--checkpoint", o.checkpoint, "analyse the surrogate rollout from --in layer 0");
  dmd->add_option("--rank", o.rank, "DMD rank");
  dmd->add_option("--role", o.role, "comma-separated roles or all");
  dmd->add_flag("--pooled", o.pooled, "one fit over all samples");

  auto* compare = app.add_subcommand("compare", "student versus teacher per-layer cosine and R^2");
  add_io(compare);
  compare->add_option("--checkpoint", o.checkpoint, "student checkpoint");
  compare->add_option("--student", o.student, "student trajectory");
  compare->add_option("--role", o.role, "comma-separated roles or all");

  auto* replay = app.add_subcommand("replay", "re-run the command recorded in a manifest");
  replay->add_option("--manifest", o.manifest, "manifest.json")->required();
  replay->add_option("--out", o.out, "override the output directory");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ErrorKind::usage);
  }
  for (auto* c : {gen, segment, fit, dynamics})
    if (c->parsed() && c->count("--seed") > 0) o.seed = seed;

  try {
    if (replay->parsed()) {
      cmd_replay(o);
      return 0;
    }
    Manifest man(app.get_subcommands().front()->get_name(), args);
    if (gen->parsed()) cmd_gen(o, man);
    if (simmat->parsed()) cmd_simmat(o, man);
    if (segment->parsed()) cmd_segment(o, man);
    if (fit->parsed()) cmd_fit(o, man);
    if (dynamics->parsed()) cmd_dynamics(o, man);
    if (dmd->parsed()) cmd_dmd(o, man);
    if (compare->parsed()) cmd_compare(o, man);
    man.write(o.out);
  } catch (const Error& e) {
    std::cerr << "depthflow: " << e.what() << "\n";
    return e.exit_code();
  } catch (const fs::filesystem_error& e) {
    std::cerr << "depthflow: " << e.what() << "\n";
    return static_cast<int>(ErrorKind::data);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args);
}
