#include "mgt/cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <sstream>

#include <CLI11.hpp>

#include "mgt/checkpoint.hpp"
#include "mgt/data.hpp"
#include "mgt/error.hpp"
#include "mgt/model.hpp"
#include "mgt/ops.hpp"
#include "mgt/slfe.hpp"
#include "mgt/training.hpp"

namespace fs = std::filesystem;

namespace mgt {

namespace {

struct KeyDoc {
  const char* key;
  const char* help;
};

// Defaults live in default_run_config(); this table fixes the key set and order of --help.
constexpr KeyDoc kKeys[] = {
    {"scales", "patch scales as K:S pairs, e.g. 32:64,64:32"},
    {"channels", "input channels (3 or 6); auto takes it from the dataset"},
    {"d_out", "token width"},
    {"depth", "encoder layers"},
    {"mlp_ratio", "encoder MLP hidden width as a multiple of d_out"},
    {"num_classes", "class count; auto takes it from the dataset"},
    {"attention", "geodesic or dot"},
    {"factors", "unit-norm blocks per token for geodesic attention"},
    {"temperature", "geodesic attention logits are -D / temperature"},
    {"sphere_map", "sphere mapping in the patch extractor (on/off)"},
    {"mrc", "max-pool/repeat/concat in the patch extractor (on/off)"},
    {"batch_size", "mini-batch size"},
    {"epochs", "training epochs"},
    {"lr", "initial learning rate"},
    {"momentum", "SGD momentum"},
    {"weight_decay", "L2 weight decay on weight matrices"},
    {"smoothing", "label smoothing"},
    {"scale_lo", "augmentation: lower bound of the random scale"},
    {"scale_hi", "augmentation: upper bound of the random scale"},
    {"jitter_std", "augmentation: jitter standard deviation"},
    {"jitter_clip", "augmentation: jitter clip"},
    {"max_drop_ratio", "augmentation: largest fraction of dropped points"},
    {"seed", "training seed (MGT_SEED overrides the config file)"},
    {"dataset", "dataset manifest; empty generates the synthetic shapes in memory"},
    {"per_class", "synthetic objects per class"},
    {"n_points", "synthetic points per object"},
    {"data_seed", "synthetic generator seed"},
    {"out", "output directory"},
    {"checkpoint", "checkpoint for eval and robustness"},
    {"keep", "robustness: retained point counts"},
    {"sweep_scales", "ablate: three scales, swept as the first 1, 2 and 3"},
    {"step", "gradcheck: central difference step"},
    {"grad_elements", "gradcheck: entries probed per end-to-end tensor"},
};

constexpr const char* kCommands[] = {"train", "eval", "gradcheck", "ablate", "robustness", "gendata"};

struct Run {
  KeyValues kv;

  const std::string& get(const std::string& key) const { return kv.at(key); }
  std::size_t size(const std::string& key) const { return parse_size(key, get(key)); }
  fs::path out() const { return fs::path(get("out")); }
};

std::vector<std::size_t> parse_size_list(const std::string& key, const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto a = item.find_first_not_of(' ');
    const auto b = item.find_last_not_of(' ');
    out.push_back(parse_size(key, a == std::string::npos ? std::string{} : item.substr(a, b - a + 1)));
  }
  if (out.empty()) throw ConfigError("key '" + key + "': empty list");
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw ConfigError("cannot write '" + path.string() + "'");
  f << text;
}

Dataset load_run_dataset(const Run& run) {
  const std::string& path = run.get("dataset");
  if (!path.empty()) {
    if (!fs::exists(path)) throw ConfigError("dataset not found: " + path);
    return load_dataset(path);
  }
  // Round-trip through the on-disk encoding so that an in-memory run and a
  // run on `gendata` output see bit-identical clouds.
  const SyntheticDataset syn = generate_synthetic(run.size("per_class"), run.size("n_points"),
                                                  parse_u64("data_seed", run.get("data_seed")));
  Dataset ds;
  ds.manifest.classes = syn.classes;
  ds.manifest.n_points = run.size("n_points");
  ds.manifest.channels = 3;
  ds.train = decode_split(encode_split(syn.train), syn.classes.size());
  ds.test = decode_split(encode_split(syn.test), syn.classes.size());
  return ds;
}

// Fills channels and num_classes from the dataset, rejecting explicit values that disagree.
void bind_dataset(Run& run, const DatasetManifest& manifest) {
  const std::pair<const char*, std::size_t> derived[] = {{"channels", manifest.channels},
                                                          {"num_classes", manifest.classes.size()}};
  for (const auto& [key, value] : derived) {
    std::string& v = run.kv[key];
    if (v != "auto" && parse_size(key, v) != value) {
      throw ConfigError(std::string(key) + "=" + v + " does not match the dataset (" + std::to_string(value) + ")");
    }
    v = std::to_string(value);
  }
}

ModelConfig model_config(const Run& run) {
  ModelConfig c = load_model_config(run.kv);
  c.validate();
  return c;
}

TrainConfig train_config(const Run& run) {
  TrainConfig c = load_train_config(run.kv);
  c.validate();
  return c;
}

void echo_config(const Run& run) {
  fs::create_directories(run.out());
  write_text(run.out() / "config.txt", format_key_values(run.kv));
}

void check_compatible(const ModelConfig& config, const DatasetManifest& manifest) {
  if (config.num_classes != manifest.classes.size()) {
    throw ConfigError("checkpoint has " + std::to_string(config.num_classes) + " classes, dataset has " +
                      std::to_string(manifest.classes.size()));
  }
  if (config.channels != manifest.channels) {
    throw ConfigError("checkpoint expects " + std::to_string(config.channels) + " channels, dataset has " +
                      std::to_string(manifest.channels));
  }
}

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

TrainResult train_into(const fs::path& dir, const ModelConfig& mc, const TrainConfig& tc, const Dataset& ds,
                       std::ostream& out, bool keep_best) {
  fs::create_directories(dir);
  MgtModel model = MgtModel::init(mc, tc.seed);
  out << "parameters: " << model.parameter_count() << '\n';
  const auto start = std::chrono::steady_clock::now();
  auto on_epoch = [&](const EpochRecord& r, const MgtModel& m, bool improved) {
    out << "epoch " << r.epoch << '/' << tc.epochs << "  lr " << fixed(r.lr, 5) << "  loss " << fixed(r.train_loss)
        << "  oa " << fixed(r.test_oa) << "  macc " << fixed(r.test_macc) << (improved ? "  *" : "") << std::endl;
    if (improved && keep_best) save_checkpoint(dir / "best.mgtc", m, tc);
  };
  TrainResult result = train(model, ds.train, ds.test, tc, on_epoch);
  write_text(dir / "metrics.csv", metrics_csv(result.log));
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  out << "best oa " << fixed(result.best_oa) << " at epoch " << result.best_epoch << "  (" << fixed(secs, 1)
      << " s)\n";
  return result;
}

int cmd_train(Run& run, std::ostream& out) {
  const Dataset ds = load_run_dataset(run);
  bind_dataset(run, ds.manifest);
  const ModelConfig mc = model_config(run);
  const TrainConfig tc = train_config(run);
  echo_config(run);
  train_into(run.out(), mc, tc, ds, out, true);
  return 0;
}

int cmd_eval(Run& run, std::ostream& out) {
  if (run.get("checkpoint").empty()) throw ConfigError("eval needs --checkpoint");
  if (!fs::exists(run.get("checkpoint"))) throw ConfigError("checkpoint not found: " + run.get("checkpoint"));
  const Dataset ds = load_run_dataset(run);
  bind_dataset(run, ds.manifest);
  echo_config(run);
  const Checkpoint ck = load_checkpoint(run.get("checkpoint"));
  check_compatible(ck.model.config, ds.manifest);
  const Metrics m = evaluate(ck.model, ds.test);
  out << "oa " << format_double(m.oa) << "  macc " << format_double(m.macc) << "  objects " << m.total << '\n';
  write_text(run.out() / "eval.csv",
             "oa,macc,total\n" + format_double(m.oa) + "," + format_double(m.macc) + "," + std::to_string(m.total) + "\n");
  return 0;
}

int cmd_robustness(Run& run, std::ostream& out) {
  if (run.get("checkpoint").empty()) throw ConfigError("robustness needs --checkpoint");
  if (!fs::exists(run.get("checkpoint"))) throw ConfigError("checkpoint not found: " + run.get("checkpoint"));
  const std::vector<std::size_t> keeps = parse_size_list("keep", run.get("keep"));
  const Dataset ds = load_run_dataset(run);
  bind_dataset(run, ds.manifest);
  for (std::size_t k : keeps) {
    if (k < 1 || k > ds.manifest.n_points) {
      throw ConfigError("keep=" + std::to_string(k) + " outside [1, " + std::to_string(ds.manifest.n_points) + "]");
    }
  }
  echo_config(run);
  const Checkpoint ck = load_checkpoint(run.get("checkpoint"));
  check_compatible(ck.model.config, ds.manifest);
  std::string csv = "keep,oa\n";
  for (std::size_t k : keeps) {
    validate_scales(ck.model.config.scales, k);
    std::vector<PointCloud> dropped;
    dropped.reserve(ds.test.size());
    for (const auto& cloud : ds.test) dropped.push_back(fps_drop(cloud, k));
    const Metrics m = evaluate(ck.model, dropped);
    out << "keep " << k << "  oa " << fixed(m.oa) << '\n';
    csv += std::to_string(k) + "," + format_double(m.oa) + "\n";
  }
  write_text(run.out() / "robustness.csv", csv);
  return 0;
}

int cmd_ablate(Run& run, std::ostream& out) {
  const Dataset ds = load_run_dataset(run);
  bind_dataset(run, ds.manifest);
  const ModelConfig base = model_config(run);
  const TrainConfig tc = train_config(run);
  const ScaleConfig sweep = parse_scales(run.get("sweep_scales"));
  if (sweep.size() != 3) throw ConfigError("sweep_scales must list exactly three scales");
  for (std::size_t n = 1; n <= 3; ++n) validate_scales(ScaleConfig(sweep.begin(), sweep.begin() + n), ds.manifest.n_points);
  echo_config(run);

  struct Cell {
    std::string name;
    ModelConfig config;
  };
  std::vector<Cell> cells;
  const std::tuple<const char*, bool, bool> grid[] = {
      {"A", false, false}, {"B", false, true}, {"C", true, false}, {"D", true, true}};
  for (const auto& [name, sm, mrc] : grid) {
    ModelConfig c = base;
    c.ablation = {sm, mrc};
    cells.push_back({name, c});
  }
  for (std::size_t n = 1; n <= 3; ++n) {
    ModelConfig c = base;
    c.ablation = {true, true};
    c.scales.assign(sweep.begin(), sweep.begin() + n);
    cells.push_back({"scales" + std::to_string(n), c});
  }

  std::string csv = "cell,sphere_map,mrc,scales,oa,macc,best_epoch,final_loss\n";
  std::vector<std::pair<ModelConfig, TrainResult>> done;
  for (const auto& cell : cells) {
    const TrainResult* result = nullptr;
    for (const auto& [config, r] : done) {
      if (config == cell.config) result = &r;
    }
    if (result) {
      out << "cell " << cell.name << ": same configuration as an earlier cell, reusing its run\n";
    } else {
      out << "cell " << cell.name << "  sphere_map " << format_bool(cell.config.ablation.sphere_map) << "  mrc "
          << format_bool(cell.config.ablation.mrc) << "  scales " << format_scales(cell.config.scales) << '\n';
      done.emplace_back(cell.config, train_into(run.out() / "ablate" / cell.name, cell.config, tc, ds, out, false));
      result = &done.back().second;
    }
    const EpochRecord& best = result->log.at(result->best_epoch - 1);
    const double final_loss = result->log.back().train_loss;
    if (!std::isfinite(final_loss)) throw NumericError("cell " + cell.name + " ended with a non-finite loss");
    csv += cell.name + "," + format_bool(cell.config.ablation.sphere_map) + "," + format_bool(cell.config.ablation.mrc) +
           ",\"" + format_scales(cell.config.scales) + "\"," + format_double(best.test_oa) + "," +
           format_double(best.test_macc) + "," + std::to_string(result->best_epoch) + "," + format_double(final_loss) +
           "\n";
  }
  write_text(run.out() / "ablation.csv", csv);
  out << csv;
  return 0;
}

int cmd_gradcheck(Run& run, std::ostream& out) {
  const double step = parse_double("step", run.get("step"));
  const std::size_t elements = run.size("grad_elements");
  const std::uint64_t seed = parse_u64("seed", run.get("seed"));
  echo_config(run);
  const auto start = std::chrono::steady_clock::now();
  const auto groups = gradcheck_suite(step, elements, seed);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  bool passed = true;
  std::string csv = "group,param,checked,max_error,passed\n";
  out << "step " << format_double(step) << '\n';
  for (const auto& g : groups) {
    char line[160];
    std::snprintf(line, sizeof line, "%-28s max_rel_err %.3e  %s\n", g.name.c_str(), g.report.max_error,
                  g.report.passed ? "ok" : "FAIL");
    out << line;
    if (!g.report.passed) {
      passed = false;
      std::istringstream lines(g.report.summary());
      for (std::string l; std::getline(lines, l);) {
        if (l.rfind("FAIL", 0) == 0) out << "    " << g.name << ": " << l << '\n';
      }
    }
    for (const auto& p : g.report.params) {
      csv += g.name + "," + p.name + "," + std::to_string(p.checked) + "," + format_double(p.max_error) + "," +
             (p.passed ? "1" : "0") + "\n";
    }
  }
  write_text(run.out() / "gradcheck.csv", csv);
  out << (passed ? "all groups within tolerance" : "gradient check FAILED") << "  (" << fixed(secs, 1) << " s)\n";
  return passed ? 0 : 1;
}

int cmd_gendata(Run& run, std::ostream& out) {
  echo_config(run);
  const SyntheticDataset syn = generate_synthetic(run.size("per_class"), run.size("n_points"),
                                                  parse_u64("data_seed", run.get("data_seed")));
  const fs::path manifest = write_dataset(run.out(), syn);
  out << "wrote " << syn.train.size() << " train / " << syn.test.size() << " test objects, manifest "
      << manifest.string() << '\n';
  return 0;
}

// ---- gradient suite ----

void perturb(const ParamList& params, std::mt19937_64& rng, double stddev) {
  std::normal_distribution<double> gauss(0.0, stddev);
  for (const auto& p : params) {
    std::vector<double> v(p.tensor->data().begin(), p.tensor->data().end());
    for (double& x : v) x += gauss(rng);
    *p.tensor = Tensor::parameter(p.tensor->shape(), std::move(v));
  }
}

std::vector<NamedTensor> named(const ParamList& params) {
  std::vector<NamedTensor> out;
  for (const auto& p : params) out.push_back({p.name, p.tensor});
  return out;
}

Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, bool grad) {
  return Tensor(shape, normal(shape_numel(shape), rng, 1.0), grad);
}

ModelConfig toy_config(ScaleConfig scales) {
  ModelConfig c;
  c.scales = std::move(scales);
  c.channels = 3;
  c.width = 8;
  c.depth = 1;
  c.mlp_ratio = 2;
  c.num_classes = 3;
  return c;
}

}  // namespace

std::vector<GradGroup> gradcheck_suite(double step, std::size_t e2e_elements, std::uint64_t seed) {
  GradCheckOptions opts;
  opts.step = step;
  opts.seed = seed;
  std::mt19937_64 rng(seed ^ 0x5eed5eedULL);
  std::vector<GradGroup> groups;

  {
    SphereMapParams sp = SphereMapParams::init(4);
    ParamList pl;
    sp.collect(pl, "sphere");
    perturb(pl, rng, 0.5);
    Tensor x = random_tensor({2, 5, 4}, rng, true);
    const Tensor w = random_tensor({2, 5, 4}, rng, false);
    auto params = named(pl);
    params.push_back({"features", &x});
    groups.push_back({"sphere_map", grad_check([&] { return sum_all(mul(sphere_map(x, sp), w)); }, params, opts)});
  }
  {
    Linear lift = Linear::init(3, 4, rng);
    ParamList pl;
    lift.collect(pl, "lift");
    perturb(pl, rng, 0.5);
    Tensor x = random_tensor({2, 5, 3}, rng, true);
    const Tensor w = random_tensor({2, 5, 8}, rng, false);
    auto params = named(pl);
    params.push_back({"points", &x});
    groups.push_back({"mrc", grad_check([&] { return sum_all(mul(mrc(lift(x)), w)); }, params, opts)});
  }
  for (std::size_t factors : {1, 2}) {
    AttentionConfig cfg;
    cfg.factors = factors;
    AttentionParams ap = AttentionParams::init(cfg, 8, rng);
    ParamList pl;
    ap.collect(pl, "attn");
    perturb(pl, rng, 0.5);
    Tensor z = random_tensor({6, 8}, rng, true);
    const Tensor w = random_tensor({6, 8}, rng, false);
    auto params = named(pl);
    params.push_back({"tokens", &z});
    const std::string name = factors == 1 ? "geodesic_attention" : "geodesic_attention/factors=2";
    groups.push_back(
        {name, grad_check([&] { return sum_all(mul(geodesic_attention(z, ap, cfg).output, w)); }, params, opts)});
  }
  for (AttentionKind kind : {AttentionKind::geodesic, AttentionKind::dot}) {
    ModelConfig cfg = toy_config({{4, 4}});
    cfg.attention.kind = kind;
    MgtModel model = MgtModel::init(cfg, seed);
    ParamList pl;
    model.layers[0].collect(pl, "layers.0");
    perturb(pl, rng, 0.3);
    Tensor z = random_tensor({5, 8}, rng, true);
    const Tensor w = random_tensor({5, 8}, rng, false);
    auto params = named(pl);
    params.push_back({"tokens", &z});
    groups.push_back({std::string("encoder_layer/") + to_string(kind),
                      grad_check([&] { return sum_all(mul(encode(z, model), w)); }, params, opts)});
  }
  {
    MgtModel model = MgtModel::init(toy_config({{4, 4}, {8, 2}}), seed);
    const ParamList pl = model.parameters();
    perturb(pl, rng, 0.3);
    const PointCloud cloud = normalize(PointCloud(3, normal(16 * 3, rng, 1.0), 1));
    const std::size_t target[] = {1};
    GradCheckOptions e2e = opts;
    e2e.max_elements = e2e_elements;
    groups.push_back(
        {"end_to_end", grad_check([&] { return label_smooth_ce(forward(cloud, model), target, 0.2); }, named(pl), e2e)});
  }
  return groups;
}

KeyValues default_run_config() {
  KeyValues kv;
  store_model_config(kv, ModelConfig{});
  store_train_config(kv, TrainConfig{});
  kv["channels"] = "auto";
  kv["num_classes"] = "auto";
  kv["dataset"] = "";
  kv["per_class"] = "75";
  kv["n_points"] = "256";
  kv["data_seed"] = "1";
  kv["out"] = "mgt_out";
  kv["checkpoint"] = "";
  kv["keep"] = "256,128,64";
  kv["sweep_scales"] = "16:16,32:8,64:4";
  kv["step"] = "1e-05";
  kv["grad_elements"] = "32";
  return kv;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-scale geometry-aware transformer for point-cloud classification"};
  std::string command;
  std::string config_path;
  std::map<std::string, std::string> flags;
  std::map<std::string, CLI::Option*> options;
  const KeyValues defaults = default_run_config();
  app.add_option("command", command, "train | eval | gradcheck | ablate | robustness | gendata")
      ->required()
      ->check(CLI::IsMember(std::vector<std::string>(std::begin(kCommands), std::end(kCommands))));
  app.add_option("--config", config_path, "key=value file; flags given on the command line take precedence");
  for (const auto& k : kKeys) {
    const std::string& def = defaults.at(k.key);
    options[k.key] = app.add_option(std::string("--") + k.key, flags[k.key],
                                    std::string(k.help) + " [" + (def.empty() ? "\"\"" : def) + "]");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    Run run;
    run.kv = defaults;
    if (!config_path.empty()) {
      for (auto& [key, value] : read_key_value_file(config_path)) {
        if (!run.kv.contains(key)) throw ConfigError("unknown key '" + key + "' in " + config_path);
        run.kv[key] = value;
      }
    }
    if (const char* env = std::getenv("MGT_SEED"); env && !options["seed"]->count()) {
      parse_u64("MGT_SEED", env);
      run.kv["seed"] = env;
    }
    for (const auto& [key, opt] : options) {
      if (opt->count()) {
        run.kv[key] = flags[key];
      }
    }
    if (run.get("out").empty()) throw ConfigError("out must name a directory");

    if (command == "train") return cmd_train(run, out);
    if (command == "eval") return cmd_eval(run, out);
    if (command == "gradcheck") return cmd_gradcheck(run, out);
    if (command == "ablate") return cmd_ablate(run, out);
    if (command == "robustness") return cmd_robustness(run, out);
    return cmd_gendata(run, out);
  } catch (const FormatError& e) {
    err << "mgt: " << e.what() << '\n';
    return 2;
  } catch (const ConfigError& e) {
    err << "mgt: " << e.what() << '\n';
    return 2;
  } catch (const NumericError& e) {
    err << "mgt: numeric failure: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "mgt: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace mgt
