#include <cstdio>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "clarify/config.hpp"
#include "clarify/fixtures.hpp"
#include "clarify/gradcheck.hpp"
#include "clarify/harness.hpp"
#include "clarify/service.hpp"

namespace {

constexpr int kConfigExit = 2;

std::filesystem::path default_out(const clarify::ExperimentConfig& config) {
  return std::filesystem::path("runs") / (config.experiment_id + "-seed" + std::to_string(config.seed));
}

void print_metrics(const clarify::ExperimentResult& r) {
  const auto& m = r.final_metrics;
  std::printf("rounds %zu, labels %d (%d clear)\n", r.rounds.size(), r.labels_spent, r.clear_labels);
  std::printf("clarity: selected %.4f, uniform %.4f\n", r.selected_clarity, r.heldout_clarity);
  std::printf("pref_accuracy %.4f, spearman %.4f", m.pref_accuracy, m.spearman);
  if (m.normalized_return) std::printf(", normalized_return %.4f", *m.normalized_return);
  std::printf("\n");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Preference-based reward learning with clarity-aware query selection"};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 0;
  std::string out;
  bool resume = false;
  bool quiet = false;
  auto* run = app.add_subcommand("run", "Run an experiment from a config file");
  run->add_option("--config", config_path, "Config file")->required();
  auto* seed_opt = run->add_option("--seed", seed, "Override the config seed");
  run->add_option("--out", out, "Artifacts directory");
  run->add_flag("--resume", resume, "Continue from the last completed round in --out");
  run->add_flag("--quiet", quiet, "No progress output");

  std::uint64_t check_seed = 0;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference checks of every loss gradient");
  gradcheck->add_option("--seed", check_seed);

  std::uint64_t demo_seed = 0;
  std::string demo_out;
  auto* demo = app.add_subcommand("demo-quad", "Quadrilateral-loss demo on uniform items");
  demo->add_option("--seed", demo_seed);
  demo->add_option("--out", demo_out, "Embedding export CSV");

  std::string model_path;
  std::string export_out;
  auto* export_emb = app.add_subcommand("export-emb", "Export a checkpoint's embeddings as CSV");
  export_emb->add_option("--model", model_path)->required();
  export_emb->add_option("--out", export_out)->required();

  std::string report_dir;
  std::string report_out;
  auto* report = app.add_subcommand("report", "Summarize per-round logs to one CSV");
  report->add_option("--dir", report_dir)->required();
  report->add_option("--out", report_out, "CSV path (default <dir>/report.csv)");

  std::string serve_config;
  int port = 8080;
  std::string host = "127.0.0.1";
  std::string serve_out;
  std::string static_dir;
  auto* serve = app.add_subcommand("serve", "Run an experiment labeled over HTTP");
  serve->add_option("--config", serve_config)->required();
  serve->add_option("--port", port);
  serve->add_option("--host", host);
  serve->add_option("--out", serve_out, "Artifacts directory");
  serve->add_option("--static", static_dir, "Directory served at /");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      clarify::ExperimentConfig config;
      try {
        config = clarify::load_config(config_path);
        if (*seed_opt) config.seed = seed;
        config.validate();
      } catch (const clarify::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfigExit;
      } catch (const clarify::ParseError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfigExit;
      }
      if (config.teacher == clarify::TeacherMode::kHuman) {
        std::cerr << "human teacher mode needs the labeling service; use `serve`\n";
        return kConfigExit;
      }
      clarify::RunOptions options;
      options.out_dir = out.empty() ? default_out(config) : std::filesystem::path(out);
      options.resume = resume;
      options.quiet = quiet;
      print_metrics(clarify::run_experiment(config, options));
      std::printf("artifacts in %s\n", options.out_dir.string().c_str());
      return 0;
    }
    if (*gradcheck) {
      bool ok = true;
      for (const auto& s : clarify::run_gradient_suites(check_seed)) {
        std::printf("%-4s %-32s max rel error %.3e (tol %.0e, %d fixtures)\n", s.passed ? "ok" : "FAIL",
                    s.name.c_str(), s.max_rel_error, s.tolerance, s.fixtures);
        if (!s.passed) std::printf("     %s\n", s.detail.c_str());
        ok = ok && s.passed;
      }
      return ok ? 0 : 1;
    }
    if (*demo) {
      std::optional<std::filesystem::path> csv;
      if (!demo_out.empty()) csv = demo_out;
      const auto r = clarify::run_demo_quad(demo_seed, {}, csv);
      std::printf("spearman %.4f\n", r.spearman);
      return r.spearman >= 0.9 ? 0 : 1;
    }
    if (*export_emb) {
      clarify::export_checkpoint(model_path, export_out);
      return 0;
    }
    if (*report) {
      const std::filesystem::path csv =
          report_out.empty() ? std::filesystem::path(report_dir) / "report.csv" : std::filesystem::path(report_out);
      clarify::write_report(report_dir, csv);
      std::printf("wrote %s\n", csv.string().c_str());
      return 0;
    }
    if (*serve) {
      clarify::ExperimentConfig config;
      try {
        config = clarify::load_config(serve_config);
        config.teacher = clarify::TeacherMode::kHuman;
        config.validate();
      } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfigExit;
      }
      clarify::ExperimentSession session(config.experiment_id, config.N_total);
      clarify::LabelService service(session, config.make_env());
      if (!static_dir.empty()) service.set_static_dir(static_dir);
      const int bound = service.bind(host, port);
      if (bound < 0) {
        std::cerr << "cannot bind " << host << ":" << port << '\n';
        return 1;
      }
      std::thread server([&] { service.listen(); });
      std::printf("labeling service on http://%s:%d\n", host.c_str(), bound);
      std::fflush(stdout);
      int code = 0;
      try {
        clarify::RunOptions options;
        options.out_dir = serve_out.empty() ? default_out(config) : std::filesystem::path(serve_out);
        options.session = &session;
        print_metrics(clarify::run_experiment(config, options));
      } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        code = 1;
      }
      service.stop();
      server.join();
      return code;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
