#include <CLI11.hpp>
#include <httplib.h>

#include <chrono>
#include <csignal>
#include <fstream>
#include <iostream>
#include <thread>

#include "theia/error.hpp"
#include "theia/gate.hpp"
#include "theia/http.hpp"

using namespace theia;
namespace fs = std::filesystem;

namespace {

struct Common {
    std::uint64_t seed = 1;
    std::string config;
    std::string out;

    Config load() const { return config.empty() ? Config{} : Config::load(config); }
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("--seed", c.seed, "Seed");
    app->add_option("--config", c.config, "key=value config file")->check(CLI::ExistingFile);
    app->add_option("--out", c.out, "Output path");
}

/// `--out` as a directory for reports; empty means stdout only.
void write_report(const std::string& out, const std::vector<Json>& records, const Json& summary,
                  const std::string& table) {
    if (out.empty()) {
        std::cout << table;
        return;
    }
    fs::create_directories(out);
    std::ofstream nd(fs::path(out) / "report.ndjson");
    for (const auto& r : records) nd << r.dump() << "\n";
    Json s = summary;
    s["type"] = "summary";
    nd << s.dump() << "\n";
    std::ofstream(fs::path(out) / "table.tsv") << table;
    if (!nd) throw IoError("cannot write report in " + out);
}

int verdict(const std::string& name, bool ok) {
    std::cout << (ok ? "PASS " : "FAIL ") << name << "\n";
    return ok ? 0 : 1;
}

QuerySpec template_query(const std::string& name) {
    if (name == "query_1") return query_1();
    if (name == "query_2") return query_2();
    if (name == "query_3") return query_3();
    if (name == "all_accept") return all_accept_query();
    if (name == "cloudy_sky") return cloudy_sky_query();
    throw ParameterError("unknown template: " + name);
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::atomic<bool> g_stop{false};
HttpServer* g_server = nullptr;

void on_signal(int) {
    g_stop = true;
    if (g_server) std::thread([] { g_server->stop(); }).detach();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Budgeted photo search over a crowd of phones"};
    app.require_subcommand(1);

    // corpus gen
    Common corpus_opts;
    CorpusParams cp;
    std::size_t total_photos = 0;
    auto* corpus = app.add_subcommand("corpus", "Corpus tools")->require_subcommand(1);
    auto* gen = corpus->add_subcommand("gen", "Generate a planted corpus");
    add_common(gen, corpus_opts);
    gen->add_option("--devices", cp.devices, "Device count");
    gen->add_option("--photos-per-device", cp.photos_per_device, "Photos per device");
    gen->add_option("--total-photos", total_photos, "Total photos, spread evenly (overrides per-device)");
    gen->add_option("--locality", cp.locality, "Fraction of relevant photos on hot devices")->check(CLI::Range(0.0, 1.0));
    gen->add_option("--relevant-fraction", cp.relevant_fraction, "Fraction of relevant photos");
    gen->add_option("--decoy-fraction", cp.decoy_fraction, "Fraction of decoys");

    // serve
    Common serve_opts;
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string fleet_dir;
    double pace = 0.0;
    auto* serve = app.add_subcommand("serve", "Run the search server");
    add_common(serve, serve_opts);
    serve->add_option("--host", host, "Bind address");
    serve->add_option("--port", port, "Port (0 picks one)");
    serve->add_option("--fleet", fleet_dir, "Corpus directory to emulate in-process")->check(CLI::ExistingDirectory);
    serve->add_option("--pace", pace, "Wall-clock ms per virtual ms for the in-process fleet");

    // device run
    Common device_opts;
    std::string device_id, device_corpus_dir, state_dir, profile = "wifi", server_host = "127.0.0.1";
    int server_port = 8080;
    std::size_t max_idle = 0;
    long poll_ms = 1000;
    auto* device = app.add_subcommand("device", "Device tools")->require_subcommand(1);
    auto* run = device->add_subcommand("run", "Run a device against a server");
    add_common(run, device_opts);
    run->add_option("--id", device_id, "Device id")->required();
    run->add_option("--corpus", device_corpus_dir, "Photo directory")->required()->check(CLI::ExistingDirectory);
    run->add_option("--state", state_dir, "State store directory");
    run->add_option("--profile", profile, "Network profile (wifi, g3)");
    run->add_option("--host", server_host, "Server host");
    run->add_option("--port", server_port, "Server port");
    run->add_option("--max-idle-polls", max_idle, "Exit after this many empty polls (0: never)");
    run->add_option("--poll-ms", poll_ms, "Long-poll wait");

    // query submit / mark
    Common query_opts;
    std::string xml_file, template_name;
    long budget = 0;
    long timeout_ms = 60000;
    auto* query = app.add_subcommand("query", "Query tools")->require_subcommand(1);
    auto* submit = query->add_subcommand("submit", "Submit a query and stream its results");
    add_common(submit, query_opts);
    auto* xml_opt = submit->add_option("--xml", xml_file, "Query XML file")->check(CLI::ExistingFile);
    submit->add_option("--template", template_name, "query_1, query_2, query_3, all_accept, cloudy_sky")
        ->excludes(xml_opt);
    submit->add_option("--budget", budget, "Budget in cost units")->required();
    submit->add_option("--host", server_host, "Server host");
    submit->add_option("--port", server_port, "Server port");
    submit->add_option("--timeout-ms", timeout_ms, "Give up after this long");

    std::string mark_session, mark_device, mark_photo;
    bool unmark = false;
    auto* mark = query->add_subcommand("mark", "Mark a result relevant");
    mark->add_option("--session", mark_session)->required();
    mark->add_option("--device", mark_device)->required();
    mark->add_option("--photo", mark_photo)->required();
    mark->add_flag("--unmark", unmark);
    mark->add_option("--host", server_host, "Server host");
    mark->add_option("--port", server_port, "Server port");

    // experiments
    Common exp_opts;
    std::string exp_corpus;
    std::size_t trials = 0;
    bool wall_clock = false;
    auto* experiment = app.add_subcommand("experiment", "Experiment runners")->require_subcommand(1);
    auto* incremental = experiment->add_subcommand("incremental", "Incremental search payoff");
    add_common(incremental, exp_opts);
    incremental->add_option("--corpus", exp_corpus, "Planted corpus directory (default: generate)")
        ->check(CLI::ExistingDirectory);
    incremental->add_option("--trials", trials, "Seeded trials");
    auto* partition = experiment->add_subcommand("partition", "Energy per strategy and profile");
    add_common(partition, exp_opts);
    auto* dynamic = experiment->add_subcommand("dynamic", "Partition trace under a delay");
    add_common(dynamic, exp_opts);
    auto* latency = experiment->add_subcommand("latency", "First-result latency and result intervals");
    add_common(latency, exp_opts);
    latency->add_option("--trials", trials, "Trials per cell");
    latency->add_flag("--wall-clock", wall_clock, "Pace the fleet in wall-clock time");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            const Config cfg = corpus_opts.load();
            CorpusParams p = CorpusParams::from_config(cfg);
            for (auto* o : gen->get_options()) {
                if (o->count() == 0) continue;
                const std::string n = o->get_name();
                if (n == "--devices") p.devices = cp.devices;
                if (n == "--photos-per-device") {
                    p.photos_per_device = cp.photos_per_device;
                    p.total_photos.reset();
                }
                if (n == "--total-photos") p.total_photos = total_photos;
                if (n == "--locality") p.locality = cp.locality;
                if (n == "--relevant-fraction") p.relevant_fraction = cp.relevant_fraction;
                if (n == "--decoy-fraction") p.decoy_fraction = cp.decoy_fraction;
                if (n == "--seed") p.seed = corpus_opts.seed;
            }
            if (corpus_opts.out.empty()) throw ParameterError("--out is required");
            const PlantedCorpus c = generate_corpus(p);
            save_corpus(c, corpus_opts.out);
            std::cout << "devices " << c.devices.size() << " photos " << c.photo_count() << " relevant "
                      << c.relevant.size() << " decoys " << c.decoys.size() << " hot " << c.hot_devices.size() << "\n";
            return 0;
        }

        if (serve->parsed()) {
            const Config cfg = serve_opts.load();
            Coordinator server(PredicateRegistry::builtin(), ServerOptions::from_config(cfg));
            std::unique_ptr<Fleet> fleet;
            if (!fleet_dir.empty()) {
                FleetOptions fo;
                fo.pace = pace;
                fo.jitter_seed = serve_opts.seed;
                fleet = std::make_unique<Fleet>(server, fo);
                const EnergySettings energy = EnergySettings::from_config(cfg);
                for (auto& d : load_planted_corpus(fleet_dir).devices)
                    fleet->add_device(make_device(d.device_id, std::move(d.corpus), energy));
            }
            HttpServer http(server, fleet.get());
            const int bound = http.bind(host, port);
            if (!serve_opts.out.empty()) std::ofstream(serve_opts.out) << bound << "\n";
            std::cout << "listening on " << host << ":" << bound << std::endl;
            g_server = &http;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            http.serve();
            g_server = nullptr;
            return 0;
        }

        if (run->parsed()) {
            const Config cfg = device_opts.load();
            const EnergySettings energy = EnergySettings::from_config(cfg);
            DeviceState d = make_device(device_id, load_corpus(device_corpus_dir), energy, profile);
            if (!state_dir.empty()) d.store = StateStore(state_dir);
            d.rng_seed = derive_seed(device_opts.seed, fnv1a64(device_id));
            RemoteDeviceOptions ro;
            ro.poll_wait = std::chrono::milliseconds(poll_ms);
            ro.max_idle_polls = max_idle;
            ro.stop = &g_stop;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            const std::size_t tasks = run_remote_device(server_host, server_port, d, PredicateRegistry::builtin(), ro);
            const Json summary = {{"device_id", device_id}, {"tasks", tasks}, {"energy", d.ledger}};
            if (!device_opts.out.empty()) std::ofstream(device_opts.out) << summary.dump() << "\n";
            std::cout << summary.dump() << "\n";
            return 0;
        }

        if (submit->parsed()) {
            std::string xml;
            if (!xml_file.empty()) xml = read_file(xml_file);
            else if (!template_name.empty()) xml = serialize_query(template_query(template_name));
            else throw ParameterError("one of --xml or --template is required");
            httplib::Client client(server_host, server_port);
            client.set_read_timeout(std::chrono::seconds(30));
            const Json body = {{"query_xml", xml}, {"budget", budget}, {"seed", query_opts.seed}};
            auto res = client.Post("/queries", body.dump(), "application/json");
            if (!res) throw TransportError("server unreachable: " + httplib::to_string(res.error()));
            if (res->status != 201) {
                std::cerr << res->body << "\n";
                return 1;
            }
            const std::string session = Json::parse(res->body).at("session_id").get<std::string>();
            std::ofstream file;
            if (!query_opts.out.empty()) file.open(query_opts.out);
            std::ostream& out = query_opts.out.empty() ? std::cout : file;
            std::size_t cursor = 0;
            const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms);
            while (std::chrono::steady_clock::now() < deadline) {
                auto page = client.Get("/queries/" + session + "/results?cursor=" + std::to_string(cursor) +
                                       "&wait_ms=1000");
                if (!page) throw TransportError("server unreachable: " + httplib::to_string(page.error()));
                std::istringstream lines(page->body);
                std::string line;
                bool done = false;
                while (std::getline(lines, line)) {
                    if (line.empty()) continue;
                    const Json j = Json::parse(line);
                    const std::string type = j.at("type").get<std::string>();
                    if (type == "result") out << line << "\n" << std::flush;
                    if (type == "complete") {
                        out << line << "\n";
                        done = true;
                    }
                    if (j.contains("next_cursor")) cursor = j.at("next_cursor").get<std::size_t>();
                }
                if (done) return 0;
            }
            std::cerr << "timed out waiting for session " << session << "\n";
            return 1;
        }

        if (mark->parsed()) {
            httplib::Client client(server_host, server_port);
            const Json body = {{"device_id", mark_device}, {"photo_id", mark_photo}, {"relevant", !unmark}};
            auto res = client.Post("/queries/" + mark_session + "/feedback", body.dump(), "application/json");
            if (!res) throw TransportError("server unreachable: " + httplib::to_string(res.error()));
            std::cout << res->body << "\n";
            return res->status == 200 ? 0 : 1;
        }

        if (incremental->parsed()) {
            const Config cfg = exp_opts.load();
            const PlantedCorpus c = exp_corpus.empty() ? generate_corpus(CorpusParams::from_config(cfg))
                                                       : load_planted_corpus(exp_corpus);
            const UserPolicy policy = UserPolicy::from_config(cfg);
            const ServerOptions options = ServerOptions::from_config(cfg);
            const std::size_t n = trials ? trials : static_cast<std::size_t>(cfg.get_long("experiment.trials", 20));
            const IncrementalTrials t = run_incremental_trials(c, policy, options, exp_opts.seed, n);
            std::vector<Json> records;
            for (std::size_t i = 0; i < t.feedback.size(); ++i) {
                Json r = report_json(t.feedback[i]);
                r["type"] = "trial";
                r["mark_none"] = report_json(t.no_feedback[i]);
                records.push_back(std::move(r));
            }
            Json summary = report_json(t, c, policy, options);
            summary["seed"] = exp_opts.seed;
            summary["config"] = cfg.values();
            write_report(exp_opts.out, records, summary, table(t));
            std::cout << "cost per relevant below Single Pass: " << t.payoff_wins << "/" << n << "\n"
                      << "marked devices more successful: " << t.locality_wins << "/" << n << "\n"
                      << "feedback beats mark-none (paired): " << t.paired_wins << "/" << n << "\n";
            int rc = verdict("incremental payoff", t.payoff_wins >= t.required());
            rc |= verdict("relevance locality", t.locality_wins >= t.required());
            return rc;
        }

        if (partition->parsed()) {
            const Config cfg = exp_opts.load();
            PartitionConfig pc = PartitionConfig::from_config(cfg);
            pc.seed = exp_opts.seed;
            const PartitionReport r = run_partition_experiment(pc);
            std::vector<Json> records;
            for (const auto& cell : report_json(r).at("cells")) {
                Json rec = cell;
                rec["type"] = "cell";
                records.push_back(rec);
            }
            Json summary = report_json(r);
            summary.erase("cells");
            summary["config"] = cfg.values();
            write_report(exp_opts.out, records, summary, table(r));
            return verdict("partitioned energy dominance", r.dominance);
        }

        if (dynamic->parsed()) {
            const Config cfg = exp_opts.load();
            DynamicConfig dc = DynamicConfig::from_config(cfg);
            dc.seed = exp_opts.seed;
            const DynamicReport r = run_dynamic_experiment(dc);
            std::vector<Json> records;
            for (const auto& t : report_json(r).at("trace")) {
                Json rec = t;
                rec["type"] = "trace";
                records.push_back(rec);
            }
            Json summary = report_json(r);
            summary.erase("trace");
            summary["config"] = cfg.values();
            write_report(exp_opts.out, records, summary, table(r));
            std::cout << "offload index before delay " << r.index_before << ", shifted at "
                      << (r.shifted_at ? std::to_string(*r.shifted_at) : "never") << ", restored at "
                      << (r.restored_at ? std::to_string(*r.restored_at) : "never") << "\n";
            return verdict("dynamic adaptation", r.passed);
        }

        if (latency->parsed()) {
            const Config cfg = exp_opts.load();
            LatencyConfig lc = LatencyConfig::from_config(cfg);
            lc.seed = exp_opts.seed;
            lc.wall_clock = wall_clock;
            if (trials) lc.trials = trials;
            const LatencyReport r = run_latency_experiment(lc);
            std::vector<Json> records;
            for (const auto& row : report_json(r).at("rows")) {
                Json rec = row;
                rec["type"] = "row";
                records.push_back(rec);
            }
            Json summary = report_json(r);
            summary.erase("rows");
            summary["config"] = cfg.values();
            write_report(exp_opts.out, records, summary, table(r));
            int rc = verdict("more devices, faster first result", r.more_devices_faster);
            rc |= verdict("All_Accept shortest interval", r.all_accept_fastest);
            return rc;
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
