#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "ic/checkpoint.hpp"
#include "ic/classifier.hpp"
#include "ic/evaluation.hpp"
#include "ic/http_api.hpp"
#include "ic/synthetic.hpp"

using namespace ic;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return json::parse(in);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

/// Model config with the data-dependent sizes taken from the dataset.
ModelConfig fit_model(ModelConfig model, const Dataset& ds) {
  if (ds.size() == 0) throw std::runtime_error("dataset has no samples");
  model.input_dim = static_cast<int>(ds.samples.front().feature_dim());
  model.num_classes = static_cast<int>(ds.class_names.size());
  model.validate();
  return model;
}

std::string history_lines(const std::vector<IterationRecord>& history) {
  std::string out;
  for (const IterationRecord& r : history) out += json(r).dump() + "\n";
  return out;
}

HttpApi* running_api = nullptr;

void handle_signal(int) {
  if (running_api) running_api->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Iterative keypoint action labeling toolkit"};
  app.require_subcommand(1);

  // prep
  auto* prep = app.add_subcommand("prep", "Filter, canonicalize, normalize and resample a keypoint dataset");
  std::string prep_input, prep_spec, prep_out, prep_aggregate = "min";
  double prep_threshold = 0.0, prep_split = 0.0;
  std::size_t prep_len = 50;
  std::uint64_t prep_seed = 0;
  bool prep_raw = false;
  prep->add_option("--input", prep_input, "Dataset file")->required();
  prep->add_option("--spec", prep_spec, "Skeleton spec (3-D data)");
  prep->add_option("--threshold", prep_threshold, "Minimum aggregated confidence");
  prep->add_option("--aggregate", prep_aggregate, "Confidence aggregate")->check(CLI::IsMember({"min", "mean"}));
  prep->add_option("--target-len", prep_len, "Frames per sample");
  prep->add_flag("--no-normalize", prep_raw, "Skip centering and scaling");
  prep->add_option("--split", prep_split, "Train fraction for a fresh train/test split");
  prep->add_option("--split-seed", prep_seed, "Seed for --split");
  prep->add_option("--out", prep_out, "Output dataset file")->required();

  // synth
  auto* synth = app.add_subcommand("synth", "Write a synthetic sinusoid-motif dataset");
  SyntheticOptions so;
  std::string synth_out;
  synth->add_option("--out", synth_out, "Output dataset file")->required();
  synth->add_option("--classes", so.classes);
  synth->add_option("--train-per-class", so.train_per_class);
  synth->add_option("--test-per-class", so.test_per_class);
  synth->add_option("--frames", so.frames);
  synth->add_option("--keypoints", so.keypoints);
  synth->add_option("--dims", so.dims);
  synth->add_option("--base-frequency", so.base_frequency);
  synth->add_option("--frequency-step", so.frequency_step);
  synth->add_option("--phase-jitter", so.phase_jitter);
  synth->add_option("--coordinate-jitter", so.coordinate_jitter);
  synth->add_option("--offset-jitter", so.offset_jitter);
  synth->add_option("--speed-jitter", so.speed_jitter);
  synth->add_option("--amplitude-jitter", so.amplitude_jitter);
  synth->add_option("--noise", so.noise);
  synth->add_option("--seed", so.seed);

  // train
  auto* train = app.add_subcommand("train", "Train the sequence model");
  std::string train_data, train_config, train_out, train_resume, train_strategy = "autoregression", train_split = "train";
  std::size_t train_epochs = 100, train_pretrain = 100;
  train->add_option("--data", train_data, "Prepared dataset")->required();
  train->add_option("--config", train_config, "Model config JSON")->required();
  train->add_option("--out", train_out, "Checkpoint to write")->required();
  train->add_option("--strategy", train_strategy, "Loss schedule")
      ->check(CLI::IsMember({"autoregression", "joint", "two-phase"}));
  train->add_option("--epochs", train_epochs, "Epochs of the (final) phase");
  train->add_option("--pretrain-epochs", train_pretrain, "Auto-regression epochs before two-phase fine-tuning");
  train->add_option("--resume", train_resume, "Continue from this checkpoint");
  train->add_option("--split", train_split, "Split to train on");

  // simulate
  auto* sim = app.add_subcommand("simulate", "Run the labeling loop with dataset labels as the oracle");
  std::string sim_data, sim_ckpt, sim_strategy = "kr", sim_out, sim_metric = "euclidean";
  LoopConfig loop;
  sim->add_option("--data", sim_data, "Prepared dataset with train/test splits")->required();
  sim->add_option("--ckpt", sim_ckpt, "Pretrained checkpoint")->required();
  sim->add_option("--strategy", sim_strategy, "Query strategy")
      ->check(CLI::IsMember({"pb", "ep", "kr", "kt", "kep", "kpb", "random"}, CLI::ignore_case));
  sim->add_option("--per", loop.per, "Fraction of each cluster queried per iteration");
  sim->add_option("--iters", loop.iterations, "Iterations");
  sim->add_option("--epochs-per-iter", loop.epochs_per_iter, "Fine-tuning epochs per iteration");
  sim->add_option("--clusters", loop.clusters, "Cluster count");
  sim->add_option("--cap", loop.cap, "Max queries per iteration (0: twice the clusters)");
  sim->add_option("--budget", loop.label_budget, "Stop after this many labels (0: no limit)");
  sim->add_option("--metric", sim_metric, "Clustering metric")->check(CLI::IsMember({"euclidean", "cosine"}));
  sim->add_option("--seed", loop.seed, "Selection seed");
  sim->add_option("--out", sim_out, "Output directory")->required();

  // curves
  auto* curves = app.add_subcommand("curves", "Accuracy against label budget for several methods");
  std::string curves_data, curves_config, curves_out, curves_methods = "KNN,PC,C,C-EP,IC,IC-KR,IC-KEP",
                                                      curves_budgets = "0.05,0.1,0.2,0.5,1.0", curves_seeds = "1,2,3,4,5",
                                                      curves_history;
  double curves_target = 80.0;
  curves->add_option("--data", curves_data, "Prepared dataset with train/test splits")->required();
  curves->add_option("--config", curves_config, "Simulation config JSON")->required();
  curves->add_option("--methods", curves_methods, "Comma-separated methods");
  curves->add_option("--budgets", curves_budgets, "Comma-separated label fractions");
  curves->add_option("--seeds", curves_seeds, "Comma-separated seeds");
  curves->add_option("--history-dir", curves_history, "Write one history file per cell here");
  curves->add_option("--target", curves_target, "Accuracy for the labels-to-reach summary");
  curves->add_option("--out", curves_out, "CSV output")->required();

  // plot
  auto* plot = app.add_subcommand("plot", "Render curves as SVG");
  std::string plot_in, plot_svg;
  plot->add_option("--in", plot_in, "Curves CSV")->required();
  plot->add_option("--svg", plot_svg, "SVG output")->required();

  // serve
  auto* serve = app.add_subcommand("serve", "Run the annotation service");
  std::string serve_store, serve_host = "127.0.0.1", serve_ui;
  int serve_port = 8080;
  serve->add_option("--store", serve_store, "Session store directory")->required();
  serve->add_option("--port", serve_port, "TCP port");
  serve->add_option("--host", serve_host, "Bind address");
  serve->add_option("--ui", serve_ui, "Static UI directory served at /");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*prep) {
      Dataset ds = load_dataset(prep_input);
      std::optional<SkeletonSpec> spec;
      if (!prep_spec.empty()) spec = load_skeleton_spec(prep_spec);
      PrepOptions options;
      options.threshold = prep_threshold;
      options.aggregate = prep_aggregate == "mean" ? ConfidenceAggregate::Mean : ConfidenceAggregate::Min;
      options.target_len = prep_len;
      options.normalize = !prep_raw;
      Dataset out = preprocess(ds, spec, options);
      if (prep_split > 0.0) out = split(out, prep_split, prep_seed);
      save_dataset(out, prep_out);
      std::cout << "kept " << out.size() << " of " << ds.size() << " samples\n";
    } else if (*synth) {
      const Dataset ds = make_synthetic_dataset(so);
      save_dataset(ds, synth_out);
      std::cout << "wrote " << ds.size() << " samples\n";
    } else if (*train) {
      const Dataset ds = load_dataset(train_data);
      const ModelConfig model = fit_model(read_json(train_config).get<ModelConfig>(), ds);
      const Pool pool = make_pool(ds, ds.split_or_all(train_split), static_cast<std::size_t>(model.seq_len));
      const bool supervised = train_strategy != "autoregression";
      if (supervised && std::none_of(pool.labels.begin(), pool.labels.end(), [](int y) { return y >= 0; }))
        throw std::runtime_error("strategy '" + train_strategy + "' needs labeled samples");

      Trainer trainer = train_resume.empty() ? Trainer(model) : load_checkpoint(train_resume);
      if (!train_resume.empty() && trainer.config().input_dim != model.input_dim)
        throw std::runtime_error("checkpoint does not match the dataset's keypoint layout");
      if (train_resume.empty() && train_strategy == "two-phase") {
        const auto trace = train_autoregression(trainer, pool.sequences, train_pretrain);
        if (!trace.empty()) std::cout << "pretrain loss " << trace.front() << " -> " << trace.back() << "\n";
        trainer = Trainer(model, trainer.params(), model.seed + 1);
      }
      const LossWeights weights = supervised ? kCombinedWeights : LossWeights{1.0, 0.0};
      for (std::size_t e = 0; e < train_epochs; ++e) {
        const EpochStats stats = trainer.run_epoch(pool.sequences, supervised ? pool.labels : std::vector<int>{}, weights);
        if (e == 0 || (e + 1) % 10 == 0 || e + 1 == train_epochs)
          std::cout << "epoch " << trainer.epoch() << " loss " << stats.loss << " pred " << stats.pred << " class "
                    << stats.cls << "\n";
      }
      save_checkpoint(trainer, train_out);
    } else if (*sim) {
      const Dataset ds = load_dataset(sim_data);
      const Trainer pretrained = load_checkpoint(sim_ckpt);
      const std::size_t seq_len = static_cast<std::size_t>(pretrained.config().seq_len);
      const Pool train_pool = make_pool(ds, ds.split_or_all("train"), seq_len);
      auto test_split = ds.splits.find("test");
      const Pool test_pool = test_split == ds.splits.end() ? Pool{} : make_pool(ds, test_split->second, seq_len);
      loop.strategy = *parse_strategy(sim_strategy);
      loop.metric = sim_metric == "cosine" ? ClusterMetric::Cosine : ClusterMetric::Euclidean;
      const ModelConfig& model = pretrained.config();
      ActiveLoop active(train_pool, test_pool, Trainer(model, pretrained.params(), model.seed + 1), loop);
      run_active_loop(active, pool_oracle(train_pool));
      fs::create_directories(sim_out);
      write_file_atomic(fs::path(sim_out) / "history.jsonl", history_lines(active.history()));
      save_checkpoint(active.trainer(), fs::path(sim_out) / "final.ckpt");
      for (const IterationRecord& r : active.history())
        std::cout << "iteration " << r.iteration << " labeled " << r.labeled_count << " ("
                  << r.labeled_fraction * 100.0 << "%) accuracy "
                  << (r.test_accuracy ? std::to_string(*r.test_accuracy) : std::string("n/a")) << "\n";
    } else if (*curves) {
      const Dataset ds = load_dataset(curves_data);
      SimulationConfig config = read_json(curves_config).get<SimulationConfig>();
      config.model = fit_model(config.model, ds);
      const std::size_t seq_len = static_cast<std::size_t>(config.model.seq_len);
      const Pool train_pool = make_pool(ds, ds.split_or_all("train"), seq_len);
      auto test_split = ds.splits.find("test");
      if (test_split == ds.splits.end()) throw std::runtime_error("dataset needs a 'test' split");
      const Pool test_pool = make_pool(ds, test_split->second, seq_len);

      std::vector<double> budgets;
      for (const auto& b : split_list(curves_budgets)) budgets.push_back(std::stod(b));
      std::vector<std::uint64_t> seeds;
      for (const auto& s : split_list(curves_seeds)) seeds.push_back(std::stoull(s));
      if (!curves_history.empty()) fs::create_directories(curves_history);

      PretrainCache cache;
      std::vector<BudgetCurve> results;
      for (const std::string& name : split_list(curves_methods)) {
        const auto method = parse_method(name);
        if (!method) throw std::runtime_error("unknown method '" + name + "'");
        CellObserver observer;
        if (!curves_history.empty())
          observer = [&](double budget, std::uint64_t seed, const CellResult& cell) {
            std::ostringstream file;
            file << to_string(*method) << "_b" << budget << "_s" << seed << ".jsonl";
            write_file_atomic(fs::path(curves_history) / file.str(), history_lines(cell.history));
          };
        results.push_back(simulate_with_oracle(*method, train_pool, test_pool, config, budgets, seeds, &cache, observer));
        for (const CurvePoint& p : results.back().points)
          std::cout << results.back().method << " budget " << p.budget << " accuracy " << p.mean_accuracy << " +- "
                    << p.std_accuracy << "\n";
      }
      std::ostringstream csv;
      write_curves_csv(csv, results);
      write_file_atomic(curves_out, csv.str());
      for (const BudgetCurve& c : results) {
        const auto need = labels_to_reach(c, curves_target);
        std::cout << c.method << " reaches " << curves_target << "% at "
                  << (need ? std::to_string(*need) : std::string("none")) << "\n";
      }
    } else if (*plot) {
      std::ifstream in(plot_in);
      if (!in) throw std::runtime_error("cannot open '" + plot_in + "'");
      write_file_atomic(plot_svg, render_svg(read_curves_csv(in)));
    } else if (*serve) {
      AnnotationService service(serve_store);
      std::optional<fs::path> ui;
      if (!serve_ui.empty()) ui = serve_ui;
      HttpApi api(service, ui);
      if (api.bind(serve_host, serve_port) < 0) throw std::runtime_error("cannot bind " + serve_host + ":" + std::to_string(serve_port));
      running_api = &api;
      std::signal(SIGINT, handle_signal);
      std::signal(SIGTERM, handle_signal);
      std::cout << "listening on http://" << serve_host << ":" << serve_port << std::endl;
      api.listen();
      running_api = nullptr;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
