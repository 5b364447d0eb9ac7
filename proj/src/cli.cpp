#include "cimsim/cli.hpp"

#include "cimsim/config.hpp"
#include "cimsim/dse.hpp"
#include "cimsim/error.hpp"
#include "cimsim/hwperf.hpp"
#include "cimsim/model.hpp"
#include "cimsim/netgraph.hpp"
#include "cimsim/quant.hpp"

#include <CLI11.hpp>
#include <openssl/evp.h>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace cimsim {
namespace {

namespace fs = std::filesystem;

class Timer {
public:
    void start(std::string phase) {
        phase_ = std::move(phase);
        t0_ = std::chrono::steady_clock::now();
    }
    void stop() {
        const std::chrono::duration<double> d = std::chrono::steady_clock::now() - t0_;
        timings_[phase_] = d.count();
    }
    json to_json() const { return json(timings_); }

private:
    std::string phase_;
    std::chrono::steady_clock::time_point t0_;
    std::map<std::string, double> timings_;
};

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw FormatError("cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error("cannot write " + p.string());
    out << text;
}

json parse_json_file(const fs::path& p) {
    try {
        return json::parse(read_file(p));
    } catch (const json::parse_error& e) {
        throw FormatError(p.string() + ": " + e.what());
    }
}

// Options shared by every subcommand.
struct Common {
    std::string config;
    int jobs = 0;
    std::string out;
};

struct Loaded {
    SimulationConfig cfg;
    std::string digest;
};

Loaded load(const Common& c, std::ostream& err) {
    Loaded l;
    if (c.config.empty()) {
        l.digest = sha256_hex(to_json(l.cfg).dump());
    } else {
        const std::string bytes = read_file(c.config);
        l.digest = sha256_hex(bytes);
        l.cfg = parse_config_text(bytes, fs::path(c.config).parent_path());
    }
    const ValidationReport rep = validate(l.cfg);
    for (const auto& w : rep.warnings) err << "warning: " << w << '\n';
    if (!rep.ok()) {
        std::string msg = rep.errors.front();
        for (std::size_t i = 1; i < rep.errors.size(); ++i) msg += "; " + rep.errors[i];
        throw ConfigError(ConfigErrorKind::Range, "", msg);
    }
    return l;
}

void write_manifest(const fs::path& beside, bool is_dir, const std::string& subcommand, const Loaded& l,
                    const std::vector<std::string>& outputs, const Timer& timer, int jobs) {
    json m{{"subcommand", subcommand},
           {"config_digest", "sha256:" + l.digest},
           {"seed", l.cfg.seed},
           {"version", CIMSIM_VERSION},
           {"outputs", outputs},
           {"jobs", jobs},
           {"timings_s", timer.to_json()}};
    const fs::path path = is_dir ? beside / "manifest.json" : fs::path(beside.string() + ".manifest.json");
    write_file(path, m.dump(2) + "\n");
}

json stats_json(const SiteRecord& r) {
    json masks = json::array();
    for (const auto& [mask, count] : r.stats.masks)
        masks.push_back({{"used_rows", mask.used_rows}, {"used_cols", mask.used_cols}, {"count", count}});
    return json{{"name", r.site.name},         {"kind", to_string(r.site.kind)},
                {"vectors", r.stats.vectors},   {"cycles", r.stats.cycles},
                {"invocations", r.stats.invocations}, {"alpha_avg", r.stats.alpha_avg()},
                {"g_avg", r.stats.g_avg()},     {"subarrays", r.plan.slots.size()},
                {"masks", masks}};
}

int effective_jobs(int jobs) {
#ifdef _OPENMP
    if (jobs > 0) omp_set_num_threads(jobs);
    return jobs > 0 ? jobs : omp_get_max_threads();
#else
    return 1;
#endif
}

}  // namespace

std::string sha256_hex(const std::string& bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw Error("SHA-256 digest failed");
    std::string hex;
    char buf[3];
    for (unsigned int i = 0; i < len; ++i) {
        std::snprintf(buf, sizeof buf, "%02x", md[i]);
        hex += buf;
    }
    return hex;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Compute-in-memory accelerator simulator", "cimsim"};
    app.require_subcommand(1);
    Common common;
    auto add_common = [&common](CLI::App* sub, bool out_required) {
        sub->add_option("--config", common.config, "Simulation config (JSON)")->check(CLI::ExistingFile);
        sub->add_option("--jobs", common.jobs, "Worker threads (default: all cores)")->check(CLI::PositiveNumber);
        auto* o = sub->add_option("--out", common.out, "Output path");
        if (out_required) o->required();
    };

    std::string arch = "tiny-cnn", network, model, mode, space, input, format = "text";
    std::size_t samples = 256;
    std::optional<std::uint64_t> seed;

    auto* synth = app.add_subcommand("synth", "Synthesize a teacher model bundle");
    add_common(synth, true);
    synth->add_option("--arch", arch, "Built-in architecture")->check(CLI::IsMember(builtin_arch_names()));
    synth->add_option("--network", network, "Network description JSON instead of --arch")->check(CLI::ExistingFile);
    synth->add_option("--samples", samples, "Evaluation inputs")->check(CLI::PositiveNumber);
    synth->add_option("--seed", seed, "Seed (default: config seed)");

    auto* quant = app.add_subcommand("quantize", "Quantize bundle weights");
    add_common(quant, true);
    quant->add_option("--model", model, "Model bundle directory")->required()->check(CLI::ExistingDirectory);

    auto* infer = app.add_subcommand("infer", "Run inference and report fidelity");
    add_common(infer, true);
    infer->add_option("--model", model, "Model bundle directory")->required()->check(CLI::ExistingDirectory);
    mode = "cim";
    infer->add_option("--mode", mode, "software or cim")->check(CLI::IsMember({"software", "cim"}));

    std::string est_mode;
    auto* est = app.add_subcommand("estimate", "Estimate area, latency and energy");
    add_common(est, true);
    est->add_option("--model", model, "Model bundle directory")->required()->check(CLI::ExistingDirectory);
    est->add_option("--mode", est_mode, "trace or average (default: config mode)")
        ->check(CLI::IsMember({"trace", "average"}));

    auto* dse = app.add_subcommand("dse", "Greedy design-space exploration");
    add_common(dse, true);
    dse->add_option("--space", space, "Search space JSON")->required()->check(CLI::ExistingFile);
    dse->add_option("--model", model, "Model bundle directory")->required()->check(CLI::ExistingDirectory);

    auto* report = app.add_subcommand("report", "Render a hardware report");
    add_common(report, false);
    report->add_option("--in", input, "Report JSON from estimate")->required()->check(CLI::ExistingFile);
    report->add_option("--format", format, "text or json")->check(CLI::IsMember({"text", "json"}));

    std::vector<std::string> argv_store{"cimsim"};
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& a : argv_store) argv.push_back(a.data());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n' << app.help();
        return kExitUsage;
    }

    try {
        const int jobs = effective_jobs(common.jobs);
        Timer timer;
        const fs::path outp = common.out;

        if (synth->parsed()) {
            Loaded l = load(common, err);
            if (seed) l.cfg.seed = *seed;
            timer.start("synth");
            const NetworkDesc desc = network.empty() ? builtin_arch(arch) : network_desc_from_json(parse_json_file(network));
            const ModelBundle b = synth_model(l.cfg.seed, desc, {samples});
            save_bundle(b, outp);
            timer.stop();
            write_manifest(outp, true, "synth", l, {outp.string()}, timer, jobs);
            return kExitOk;
        }

        if (quant->parsed()) {
            const Loaded l = load(common, err);
            timer.start("quantize");
            const ModelBundle b = load_bundle(model);
            json params = json::object();
            std::vector<std::string> outputs;
            fs::create_directories(outp);
            for (const auto& [key, t] : b.weights) {
                if (key.ends_with(".bias")) continue;
                const QuantizedTensor q = quantize(t, calibrate(t, l.cfg.quant.scheme, l.cfg.quant.weight_bits));
                write_npy(outp / (key + ".npy"), IntTensor(q.shape, q.values));
                params[key] = to_json(q.params);
                outputs.push_back((outp / (key + ".npy")).string());
            }
            write_file(outp / "quant.json", params.dump(2) + "\n");
            timer.stop();
            write_manifest(outp, true, "quantize", l, outputs, timer, jobs);
            return kExitOk;
        }

        if (infer->parsed()) {
            const Loaded l = load(common, err);
            timer.start("load");
            const ModelBundle b = load_bundle(model);
            const Network net = build_network(b);
            timer.stop();
            timer.start("infer");
            json result{{"mode", mode}, {"samples", b.samples()}};
            if (mode == "software") {
                result["fidelity"] = fidelity(run_software_quantized(net, b.inputs, l.cfg), b.labels);
            } else {
                const CimRun run = run_cim(net, b.inputs, l.cfg);
                result["fidelity"] = fidelity(run.outputs, b.labels);
                json sites = json::array();
                for (const auto& r : run.sites) sites.push_back(stats_json(r));
                result["sites"] = sites;
            }
            timer.stop();
            write_file(outp, result.dump(2) + "\n");
            write_manifest(outp, false, "infer", l, {outp.string()}, timer, jobs);
            return kExitOk;
        }

        if (est->parsed()) {
            const Loaded l = load(common, err);
            const EstimateMode m = est_mode.empty() ? l.cfg.mode : parse_mode(est_mode);
            timer.start("load");
            const ModelBundle b = load_bundle(model);
            const Network net = build_network(b);
            timer.stop();
            timer.start("simulate");
            const CimRun run = run_cim(net, b.inputs, l.cfg, {.keep_traces = m == EstimateMode::Trace});
            timer.stop();
            timer.start("estimate");
            const HardwareReport rep = estimate(build_chip(net, l.cfg), run.sites, m);
            timer.stop();
            json j = to_json(rep);
            j["fidelity"] = fidelity(run.outputs, b.labels);
            write_file(outp, j.dump(2) + "\n");
            write_manifest(outp, false, "estimate", l, {outp.string()}, timer, jobs);
            return kExitOk;
        }

        if (dse->parsed()) {
            const Loaded l = load(common, err);
            const SearchSpace s = search_space_from_json(parse_json_file(space));
            timer.start("dse");
            const ModelBundle b = load_bundle(model);
            const DSEResult r = explore(s, b, l.cfg);
            timer.stop();
            write_file(outp / "dse.json", to_json(r).dump(2) + "\n");
            write_file(outp / "dse_tables.txt", render_dse_tables(r));
            write_manifest(outp, true, "dse", l, {(outp / "dse.json").string(), (outp / "dse_tables.txt").string()},
                           timer, jobs);
            return kExitOk;
        }

        if (report->parsed()) {
            const json j = parse_json_file(input);
            const HardwareReport r = hardware_report_from_json(j);
            std::string text;
            if (format == "json") {
                json stamped = j;
                stamped["schema_version"] = HardwareReport::kSchemaVersion;
                text = stamped.dump(2) + "\n";
            } else {
                text = render_text(r);
            }
            if (common.out.empty()) {
                out << text;
            } else {
                const Loaded l = load(common, err);
                write_file(outp, text);
                write_manifest(outp, false, "report", l, {outp.string()}, timer, jobs);
            }
            return kExitOk;
        }
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const FormatError& e) {
        err << "error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const ShapeError& e) {
        err << "error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitUsage;
}

}  // namespace cimsim
