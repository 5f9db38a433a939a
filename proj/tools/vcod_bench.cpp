// vcod-bench: dataset scan, pseudo labels, evaluation and the toy demo.
// Results go to stdout as JSON; failures print one JSON error record to
// stderr and exit nonzero.

#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "vcod/bench/eval.hpp"
#include "vcod/bench/manifest.hpp"
#include "vcod/bench/pseudo.hpp"
#include "vcod/bench/report.hpp"
#include "vcod/bench/toydemo.hpp"

using namespace vcod;
using namespace vcod::bench;

namespace {

enum Exit { ok = 0, failure = 1, usage = 2, manifest = 3, evaluation = 4, training = 5, io = 6 };

int fail(const std::string& kind, const std::string& message, int code) {
    std::cerr << nlohmann::json{{"error", {{"type", kind}, {"message", message}, {"exit_code", code}}}}.dump() << "\n";
    return code;
}

void add_run_options(CLI::App* app, RunConfig& cfg) {
    app->add_option("--threshold", cfg.threshold, "binarisation threshold for warped masks")->capture_default_str();
    app->add_option("--alpha", cfg.consistency.alpha, "forward-backward consistency alpha")->capture_default_str();
    app->add_option("--beta", cfg.consistency.beta, "forward-backward consistency beta")->capture_default_str();
    app->add_option("--threads", cfg.threads, "sequences processed in parallel")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Video camouflaged object detection bench"};
    app.require_subcommand(1);

    std::string root, predictions, out_dir = ".", mode = "annotated", format = "both";
    RunConfig cfg;
    ToyDemoConfig demo;
    bool freeze = false;

    auto* scan = app.add_subcommand("scan", "validate a dataset and print its manifest summary");
    scan->add_option("--root", root, "dataset root")->required();

    auto* pseudo = app.add_subcommand("pseudo", "write flow-warped pseudo masks next to GT");
    pseudo->add_option("--root", root, "dataset root")->required();
    add_run_options(pseudo, cfg);

    auto* eval = app.add_subcommand("eval", "score predictions and write CSV / markdown reports");
    eval->add_option("--root", root, "dataset root")->required();
    eval->add_option("--predictions", predictions, "predictions root (<sequence>/<frame>.png)")->required();
    eval->add_option("--mode", mode, "annotated | pseudo")
        ->check(CLI::IsMember({"annotated", "pseudo"}))
        ->capture_default_str();
    eval->add_option("--format", format, "csv | markdown | both")
        ->check(CLI::IsMember({"csv", "markdown", "both"}))
        ->capture_default_str();
    eval->add_option("--out", out_dir, "report directory")->capture_default_str();
    add_run_options(eval, cfg);

    auto* toy = app.add_subcommand("toydemo", "overfit the toy short-term model on synthetic clips");
    toy->add_option("--seed", demo.seed, "random seed")->capture_default_str();
    toy->add_option("--steps", demo.steps, "optimisation steps")->capture_default_str();
    toy->add_option("--clips", demo.clips, "synthetic clips")->capture_default_str();
    toy->add_option("--lr", demo.train.adam.lr, "peak learning rate")->capture_default_str();
    toy->add_flag("--freeze-correlation", freeze, "zero the gradient through phi and the correlation logits");
    toy->add_option("--out", out_dir, "output directory for loss_trace.csv and summary.json")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return fail("UsageError", e.what(), usage);
    }

    try {
        if (*scan) {
            std::cout << manifest_summary(scan_dataset(root)).dump(2) << "\n";
        } else if (*pseudo) {
            const auto m = scan_dataset(root);
            std::cout << pseudo_summary_json(run_pseudo(m, cfg)).dump(2) << "\n";
        } else if (*eval) {
            cfg.mode = mode == "pseudo" ? EvalMode::with_pseudo : EvalMode::annotated_only;
            const auto m = scan_dataset(root);
            const auto r = run_eval(m, predictions, cfg);
            nlohmann::json written = nlohmann::json::array();
            if (format != "markdown") {
                write_text(fs::path(out_dir) / "report.csv", csv_table(r.report));
                written.push_back((fs::path(out_dir) / "report.csv").string());
            }
            if (format != "csv") {
                write_text(fs::path(out_dir) / "report.md", markdown_table(r.report));
                written.push_back((fs::path(out_dir) / "report.md").string());
            }
            nlohmann::json overall = nlohmann::json::object();
            const auto v = report_values(r.report.overall);
            for (std::size_t i = 0; i < v.size(); ++i) overall[kCsvColumns[i]] = fixed(v[i], 3);
            std::cout << nlohmann::json{{"frames", r.frames.size()},
                                        {"sequences", r.report.per_group.size()},
                                        {"overall", overall},
                                        {"written", written}}
                             .dump(2)
                      << "\n";
        } else if (*toy) {
            demo.train.backward.freeze_correlation = freeze;
            const auto r = run_toydemo(demo);
            write_text(fs::path(out_dir) / "loss_trace.csv", toydemo_trace_csv(r));
            const auto summary = toydemo_summary(demo, r);
            write_text(fs::path(out_dir) / "summary.json", summary.dump(2) + "\n");
            std::cout << summary.dump(2) << "\n";
        }
    } catch (const ManifestError& e) {
        return fail("ManifestError", e.what(), manifest);
    } catch (const EvaluationError& e) {
        return fail("EvaluationError", e.what(), evaluation);
    } catch (const TrainingError& e) {
        return fail("TrainingError", e.what(), training);
    } catch (const FormatError& e) {
        return fail("FormatError", e.what(), io);
    } catch (const InputError& e) {
        return fail("InputError", e.what(), usage);
    } catch (const std::exception& e) {
        return fail("Error", e.what(), failure);
    }
    return ok;
}
