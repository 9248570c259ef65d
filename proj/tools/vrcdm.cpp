#include <atomic>
#include <chrono>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "vrc/config.hpp"
#include "vrc/eval.hpp"
#include "vrc/qa_gen.hpp"
#include "vrc/service.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw vrc::Error(fmt::format("cannot write '{}'", path.string()));
    return out;
}

std::vector<vrc::LinguisticScene> load_scenes(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw vrc::NotFoundError(fmt::format("scene file '{}' not found", path.string()));
    std::vector<vrc::LinguisticScene> out;
    for (std::string line; std::getline(in, line);) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        out.push_back(vrc::parse_ls(line));
    }
    return out;
}

/// A directory (or a path without .jsonl) receives scenes.jsonl.
fs::path scenes_file(const fs::path& out) {
    return out.extension() == ".jsonl" ? out : out / "scenes.jsonl";
}

int sim_run(const fs::path& config_path, const fs::path& out_path) {
    const vrc::RunConfig cfg = vrc::RunConfig::load(config_path);
    auto pipeline = cfg.make_pipeline();
    const fs::path file = scenes_file(out_path);
    std::ofstream out = open_out(file);
    std::size_t n = 0;
    pipeline->run([&](const vrc::LinguisticScene& ls) {
        out << vrc::render_ls(ls) << '\n';
        ++n;
    });
    fmt::print(stderr, "{} scenes over {:.1f} s -> {}\n", n, cfg.sim.duration, file.string());
    return 0;
}

struct QaArgs {
    fs::path scenes, templates = VRC_DATA_DIR "/templates.jsonl", out;
    std::size_t n = 1000;
    std::uint64_t seed = 1;
    bool no_prefix = false;
};

int qa_generate(const QaArgs& a) {
    const auto scenes = load_scenes(scenes_file(a.scenes));
    vrc::DatasetOptions opt;
    opt.n = a.n;
    opt.seed = a.seed;
    opt.prefix_on = !a.no_prefix;
    vrc::DatasetReport report;
    const auto pairs = vrc::generate_dataset(scenes, vrc::load_templates(a.templates), opt, &report);
    if (a.out.empty()) {
        std::cout << vrc::render_dataset(pairs);
    } else {
        open_out(a.out) << vrc::render_dataset(pairs);
    }
    fmt::print(stderr, "{}", report.render());
    return 0;
}

struct EvalArgs {
    fs::path dataset, scenes, backend, prompts = VRC_DATA_DIR "/prompts", out;
    std::string pipeline = "cop";
    bool no_prefix = false, no_rule = false;
    std::size_t concurrency = 8, limit = 0;
};

int eval_run(const EvalArgs& a) {
    const auto dataset = vrc::load_dataset(a.dataset);
    const auto scenes = load_scenes(scenes_file(a.scenes));
    auto backend = vrc::make_backend(vrc::read_json_file(a.backend), vrc::AnswerKey::from_dataset(dataset));
    vrc::EvalOptions opt;
    opt.pipeline = vrc::PipelineSpec::parse(a.pipeline);
    opt.prefix_on = !a.no_prefix;
    opt.rule_on = !a.no_rule;
    opt.concurrency = a.concurrency;
    opt.limit = a.limit;
    const vrc::EvalOutput result = vrc::run_eval(dataset, scenes, vrc::PromptSet::load(a.prompts.string()), *backend, opt);

    if (!a.out.empty()) {
        fs::create_directories(a.out);
        std::ofstream records = open_out(a.out / "records.jsonl");
        for (const auto& r : result.records) records << vrc::to_json(r).dump() << '\n';
        if (result.report) {
            open_out(a.out / "report.json") << vrc::to_json(*result.report).dump(2) << '\n';
            open_out(a.out / "report.txt") << vrc::render_report(*result.report);
        }
    }
    if (result.report) std::cout << vrc::render_report(*result.report);
    if (result.aborted) {
        fmt::print(stderr, "aborted after {} records: {}\n", result.records.size(), result.abort_reason);
        return 3;
    }
    return 0;
}

int serve(const fs::path& config_path) {
    vrc::Service service(vrc::ServiceConfig::load(config_path));
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    const int port = service.start_http();
    service.start_simulation();
    fmt::print(stderr, "listening on http://{}:{} (model {})\n", service.config().host, port,
               service.backend().model_id());
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(200));
    service.stop_simulation();
    service.stop_http();
    return 0;
}

struct AskArgs {
    std::string question, ego;
    fs::path config = VRC_DATA_DIR "/configs/service.json";
    int ticks = 5;
    bool raw = false;
};

int ask(const AskArgs& a) {
    vrc::Service service(vrc::ServiceConfig::load(a.config));
    for (int i = 0; i < std::max(1, a.ticks); ++i) service.tick();
    json body = {{"question", a.question}};
    if (!a.ego.empty()) body["ego_id"] = a.ego;
    const vrc::ApiResponse r = service.handle_query(body.dump());
    const json j = json::parse(r.body);
    if (a.raw) {
        std::cout << j.dump(2) << '\n';
    } else if (r.status == 200) {
        fmt::print("[scene {} ego {}] task: {}\n{}\n", j.at("scene_id").get<std::int64_t>(),
                   j.at("ego_id").get<std::string>(), j.at("task").get<std::string>(),
                   j.at("answer").get<std::string>());
    } else {
        fmt::print(stderr, "error {}: {}\n", r.status, j.at("error").at("message").get<std::string>());
    }
    return r.status == 200 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Vehicle-road-cloud scene pipeline, QA generation, evaluation and query service"};
    app.require_subcommand(1);

    auto* sim = app.add_subcommand("sim", "Traffic simulation");
    sim->require_subcommand(1);
    fs::path sim_config, sim_out = "frames";
    auto* sim_run_cmd = sim->add_subcommand("run", "Run the scene pipeline and write scenes as JSONL");
    sim_run_cmd->add_option("--config", sim_config, "Run config JSON")->required()->check(CLI::ExistingFile);
    sim_run_cmd->add_option("--out", sim_out, "Output directory or .jsonl file")->capture_default_str();

    auto* qa = app.add_subcommand("qa", "Question-answer datasets");
    qa->require_subcommand(1);
    QaArgs qa_args;
    auto* qa_gen = qa->add_subcommand("generate", "Generate a QA dataset from scenes");
    qa_gen->add_option("--scenes", qa_args.scenes, "Scenes JSONL (or directory from sim run)")->required();
    qa_gen->add_option("--templates", qa_args.templates, "Template JSONL")->capture_default_str();
    qa_gen->add_option("-n", qa_args.n, "Number of pairs")->capture_default_str();
    qa_gen->add_option("--seed", qa_args.seed, "Random seed")->capture_default_str();
    qa_gen->add_flag("--no-prefix", qa_args.no_prefix, "Omit the radius phrase");
    qa_gen->add_option("--out", qa_args.out, "Output JSONL (default stdout)");

    auto* ev = app.add_subcommand("eval", "Evaluation");
    ev->require_subcommand(1);
    EvalArgs ev_args;
    auto* ev_run = ev->add_subcommand("run", "Answer and grade a dataset");
    ev_run->add_option("--dataset", ev_args.dataset, "QA dataset JSONL")->required()->check(CLI::ExistingFile);
    ev_run->add_option("--scenes", ev_args.scenes, "Scenes JSONL the dataset was drawn from")->required();
    ev_run->add_option("--pipeline", ev_args.pipeline, "cop, osp1, osp2, osp3 or osp4")->capture_default_str();
    ev_run->add_option("--backend", ev_args.backend, "Backend config JSON")->required()->check(CLI::ExistingFile);
    ev_run->add_option("--prompts", ev_args.prompts, "Prompt directory")->capture_default_str();
    ev_run->add_flag("--no-prefix", ev_args.no_prefix, "Strip the radius phrase from questions");
    ev_run->add_flag("--no-rule", ev_args.no_rule, "Drop the restrictive existence rule");
    ev_run->add_option("--concurrency", ev_args.concurrency, "Parallel requests")->capture_default_str();
    ev_run->add_option("--limit", ev_args.limit, "Evaluate only the first N pairs (0 = all)");
    ev_run->add_option("--out", ev_args.out, "Directory for records.jsonl, report.json, report.txt");

    fs::path serve_config = VRC_DATA_DIR "/configs/service.json";
    auto* srv = app.add_subcommand("serve", "Run the simulation and HTTP service");
    srv->add_option("--config", serve_config, "Service config JSON")->capture_default_str()->check(CLI::ExistingFile);

    AskArgs ask_args;
    auto* ask_cmd = app.add_subcommand("ask", "Answer one question against a freshly simulated scene");
    ask_cmd->add_option("question", ask_args.question, "Question text")->required();
    ask_cmd->add_option("--config", ask_args.config, "Service config JSON")->capture_default_str();
    ask_cmd->add_option("--ego", ask_args.ego, "Ego AV id (default: first AV)");
    ask_cmd->add_option("--ticks", ask_args.ticks, "Scenes to simulate before asking")->capture_default_str();
    ask_cmd->add_flag("--json", ask_args.raw, "Print the full JSON result");

    CLI11_PARSE(app, argc, argv);

    try {
        if (sim_run_cmd->parsed()) return sim_run(sim_config, sim_out);
        if (qa_gen->parsed()) return qa_generate(qa_args);
        if (ev_run->parsed()) return eval_run(ev_args);
        if (srv->parsed()) return serve(serve_config);
        if (ask_cmd->parsed()) return ask(ask_args);
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return 2;
    }
    return 0;
}
