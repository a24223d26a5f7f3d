// relm: train, predict, bench, cost and synth front end.

#include <CLI11.hpp>

#include <cstdlib>
#include <exception>
#include <fstream>
#include <iostream>
#include <string>

#include "relm/relm.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRunFailure = 1;
constexpr int kExitUsage = 2;

struct ModelOptions {
  std::string arch = "elman";
  std::size_t hidden = 10;
  std::size_t lags = 10;
  std::size_t F = 1;
  std::size_t R = 1;
  std::string activation = "sigmoid";
  std::string backend = "tiled";
  std::size_t tile = 16;
  unsigned workers = 0;
};

void add_model_options(CLI::App* app, ModelOptions& o) {
  app->add_option("--arch", o.arch, "elman|jordan|narmax|fully|lstm|gru")
      ->check(CLI::IsMember({"elman", "jordan", "narmax", "fully", "fully_connected", "fc", "lstm", "gru"}));
  app->add_option("--hidden", o.hidden, "hidden neurons M")->check(CLI::PositiveNumber);
  app->add_option("--lags", o.lags, "lags Q")->check(CLI::PositiveNumber);
  app->add_option("--F", o.F, "NARMAX output feedback length");
  app->add_option("--R", o.R, "NARMAX error feedback length");
  app->add_option("--activation", o.activation, "g for plain recurrences")->check(CLI::IsMember({"sigmoid", "tanh"}));
  app->add_option("--backend", o.backend, "seq|basic|tiled")->check(CLI::IsMember({"seq", "basic", "tiled"}));
  app->add_option("--tile", o.tile, "block size / tile width")->check(CLI::PositiveNumber);
  app->add_option("--workers", o.workers, "worker threads (0 = auto; RELM_WORKERS caps)");
}

relm::ArchitectureSpec make_spec(const ModelOptions& o, std::size_t S) {
  relm::ArchitectureSpec spec;
  spec.kind = relm::parse_arch(o.arch);
  spec.M = o.hidden;
  spec.Q = o.lags;
  spec.S = S;
  if (spec.kind == relm::ArchKind::narmax) {
    spec.F = o.F;
    spec.R = o.R;
  }
  spec.act.g = relm::parse_activation(o.activation);
  return spec;
}

relm::ExecConfig make_cfg(const ModelOptions& o) {
  relm::ExecConfig cfg;
  cfg.backend = relm::parse_backend(o.backend);
  cfg.block_size = o.tile;
  cfg.workers = o.workers;
  return cfg;
}

relm::RawSeries read_series(const std::string& data, const std::string& column, std::size_t length, double noise,
                            std::uint64_t data_seed) {
  relm::DataSource src = relm::parse_data_source(data);
  if (src.synthetic()) return relm::synth_series(src.synth, length, noise, data_seed);
  return relm::load_csv(data, column.empty() ? relm::first_csv_column(data) : column);
}

void print_eval(std::ostream& out, const relm::EvalReport& r, double naive) {
  out << "n_train,n_test,rmse_train,rmse_test,rmse_train_denorm,rmse_test_denorm,naive_last_value_rmse\n"
      << r.n_train << ',' << r.n_test << ',' << relm::format_double(r.rmse_train) << ','
      << relm::format_double(r.rmse_test) << ',' << relm::format_double(r.rmse_train_denorm) << ','
      << relm::format_double(r.rmse_test_denorm) << ',' << relm::format_double(naive) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Non-iteratively trained recurrent networks: train, predict, bench, cost, synth"};
  app.require_subcommand(1);

  // train
  ModelOptions train_opt;
  std::string train_data, train_column, train_out = "model.relm", train_report;
  double split = 0.8, synth_noise = 0.1;
  std::size_t synth_length = 5000;
  std::uint64_t seed = 42, data_seed = 0;
  auto* train = app.add_subcommand("train", "fit a model and print its evaluation report");
  add_model_options(train, train_opt);
  train->add_option("--data", train_data, "CSV path or synth:{sine|ar2|random_walk}")->required();
  train->add_option("--column", train_column, "CSV column (default: first)");
  train->add_option("--split", split, "training fraction")->check(CLI::Range(1e-9, 1.0));
  train->add_option("--seed", seed, "weight seed");
  train->add_option("--out", train_out, "model file");
  train->add_option("--report", train_report, "evaluation CSV (default: <out>.eval.csv)");
  train->add_option("--length", synth_length, "synthetic series length");
  train->add_option("--noise", synth_noise, "synthetic noise level");
  train->add_option("--data-seed", data_seed, "synthetic series seed");

  // predict
  std::string pred_model, pred_data, pred_column, pred_out;
  bool pred_recursive = false;
  unsigned pred_workers = 0;
  auto* predict = app.add_subcommand("predict", "one-step predictions for every window of a series");
  predict->add_option("--model", pred_model, "model file")->required();
  predict->add_option("--data", pred_data, "CSV path or synth:{...}")->required();
  predict->add_option("--column", pred_column, "CSV column (default: first)");
  predict->add_option("--out", pred_out, "predictions CSV (default: stdout)");
  predict->add_flag("--recursive", pred_recursive, "feed back own outputs (Jordan, NARMAX)");
  predict->add_option("--workers", pred_workers, "worker threads");
  predict->add_option("--length", synth_length, "synthetic series length");
  predict->add_option("--noise", synth_noise, "synthetic noise level");
  predict->add_option("--data-seed", data_seed, "synthetic series seed");

  // bench
  std::string plan_path, bench_out;
  double watts = 0.0;
  auto* bench = app.add_subcommand("bench", "execute a benchmark plan");
  bench->add_option("--plan", plan_path, "plan file")->required()->check(CLI::ExistingFile);
  bench->add_option("--out", bench_out, "output directory (overrides the plan)");
  bench->add_option("--watts", watts, "power for the joules estimate (overrides the plan)")->check(CLI::PositiveNumber);

  // cost
  ModelOptions cost_opt;
  cost_opt.backend = "basic";
  std::size_t cost_S = 1, cost_rows = 0;
  std::string cost_out;
  bool cost_no_measure = false;
  auto* cost = app.add_subcommand("cost", "predicted vs measured per-cell reads, writes and flops");
  add_model_options(cost, cost_opt);
  cost->add_option("--S", cost_S, "input dimension")->check(CLI::PositiveNumber);
  cost->add_option("--Q", cost_opt.lags, "lags Q")->check(CLI::PositiveNumber);
  cost->add_option("--M", cost_opt.hidden, "hidden neurons M")->check(CLI::PositiveNumber);
  cost->add_option("--rows", cost_rows, "rows of the measured instance (default: 2 x tile)");
  cost->add_option("--out", cost_out, "CSV file (default: stdout)");
  cost->add_flag("--predict-only", cost_no_measure, "skip the instrumented run");

  // synth
  std::string synth_kind = "ar2", synth_out;
  std::uint64_t synth_seed = 0;
  auto* synth = app.add_subcommand("synth", "write a synthetic series as CSV");
  synth->add_option("--kind", synth_kind, "sine|ar2|random_walk")->check(CLI::IsMember({"sine", "ar2", "random_walk"}));
  synth->add_option("--length", synth_length, "number of samples");
  synth->add_option("--noise", synth_noise, "noise level");
  synth->add_option("--seed", synth_seed, "seed");
  synth->add_option("--out", synth_out, "CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*train) {
      const relm::RawSeries raw = read_series(train_data, train_column, synth_length, synth_noise, data_seed);
      const relm::TimeSeriesDataset ds = relm::normalize_split(relm::window(raw, train_opt.lags), split);
      const relm::TrainedModel model = relm::fit(ds, make_spec(train_opt, ds.S), make_cfg(train_opt), seed);
      relm::save_model(model, train_out);
      const relm::EvalReport rep = relm::evaluate(model, ds);
      const double naive = relm::last_value_rmse(ds, rep.n_test > 0 ? ds.test_rows() : ds.train_rows());
      const std::string report_path = train_report.empty() ? train_out + ".eval.csv" : train_report;
      std::ofstream rf(report_path);
      print_eval(rf, rep, naive);
      print_eval(std::cout, rep, naive);
      const auto& t = model.timing;
      std::cout << "timing_seconds init=" << relm::format_double(t.init)
                << " transfer_in=" << relm::format_double(t.transfer_in)
                << " h_compute=" << relm::format_double(t.h_compute) << " solve=" << relm::format_double(t.solve)
                << " transfer_out=" << relm::format_double(t.transfer_out) << " total=" << relm::format_double(t.total)
                << "\nmodel " << train_out << " (" << relm::to_string(model.rank_flag) << ")\n";
      return kExitOk;
    }
    if (*predict) {
      const relm::TrainedModel model = relm::load_model(pred_model);
      const relm::RawSeries raw = read_series(pred_data, pred_column, synth_length, synth_noise, data_seed);
      const relm::TimeSeriesDataset ds = relm::apply_normalization(relm::window(raw, model.spec.Q), model.norm);
      const auto mode = pred_recursive ? relm::FeedbackMode::recursive : relm::FeedbackMode::teacher_forced;
      const auto yhat = relm::predict(model, ds, ds.all_rows(), mode, pred_workers);
      std::ofstream file;
      if (!pred_out.empty()) file.open(pred_out);
      std::ostream& out = pred_out.empty() ? std::cout : file;
      out << "index,target,prediction\n";
      for (std::size_t i = 0; i < yhat.size(); ++i) {
        out << i + model.spec.Q << ',' << relm::format_double(model.norm.applied ? model.norm.denormalize_target(ds.Y(i)) : ds.Y(i))
            << ',' << relm::format_double(model.norm.applied ? model.norm.denormalize_target(yhat[i]) : yhat[i]) << '\n';
      }
      return kExitOk;
    }
    if (*bench) {
      relm::BenchPlan plan = relm::load_plan(plan_path);
      if (watts > 0.0) plan.watts = watts;
      const std::string dir = bench_out.empty() ? plan.output_dir : bench_out;
      const relm::BenchResults res = relm::run_plan(plan, dir, std::cerr);
      std::ifstream md(dir + "/summary.md");
      std::cout << md.rdbuf();
      std::cout << "\nresults in " << dir << " (" << res.records.size() << " runs)\n";
      return kExitOk;
    }
    if (*cost) {
      const relm::ArchitectureSpec spec = make_spec(cost_opt, cost_S);
      relm::ExecConfig cfg = make_cfg(cost_opt);
      std::ofstream file;
      if (!cost_out.empty()) file.open(cost_out);
      std::ostream& out = cost_out.empty() ? std::cout : file;
      out << relm::kCostCsvHeader << '\n';
      if (cost_no_measure) {
        relm::CostReport r;
        r.kind = spec.kind;
        r.backend = cfg.backend;
        r.S = spec.S;
        r.Q = spec.Q;
        r.M = spec.M;
        r.F = spec.F;
        r.R = spec.R;
        r.TW = cfg.block_size;
        r.predicted = relm::predict_costs(spec, cfg);
        relm::write_cost_csv_row(out, r);
        return kExitOk;
      }
      const std::size_t rows = cost_rows > 0 ? cost_rows : 2 * cfg.block_size;
      relm::SeededRng rng(seed);
      std::vector<relm::RawSeries> feats;
      for (std::size_t s = 0; s < spec.S; ++s) {
        feats.push_back(relm::synth_series(relm::SynthKind::ar2, rows + spec.Q, 0.5, s + 1));
      }
      const relm::TimeSeriesDataset ds = relm::window(feats, feats.front(), spec.Q);
      const relm::WeightSet w = relm::init_weights(spec, rng);
      relm::write_cost_csv_row(out, relm::measure_costs(ds, spec, w, cfg));
      return kExitOk;
    }
    if (*synth) {
      const relm::RawSeries s =
          relm::synth_series(relm::parse_synth_kind(synth_kind), synth_length, synth_noise, synth_seed);
      std::ofstream out(synth_out);
      if (!out) throw relm::FormatError("cannot write '" + synth_out + "'");
      out << s.name << '\n';
      for (double v : s.values) out << relm::format_double(v) << '\n';
      return kExitOk;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRunFailure;
  }
  return kExitUsage;
}
