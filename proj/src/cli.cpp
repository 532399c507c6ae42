#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "twb/criteria.hpp"
#include "twb/dist_core.hpp"
#include "twb/intensity.hpp"
#include "twb/io.hpp"
#include "twb/reconstruct.hpp"
#include "twb/rng.hpp"
#include "twb/simulator.hpp"

namespace twb {

namespace {

std::string echo_args(int argc, char** argv) {
    std::string s;
    for (int i = 0; i < argc; ++i) {
        if (i) s += ' ';
        s += argv[i];
    }
    return s;
}

struct SimulateArgs {
    std::string model_path;
    std::int64_t shots = 200000;
    std::uint64_t seed = 0;
    std::string out;
};

struct AnalyzeArgs {
    std::string shots_path;
    std::string out;
    double eta = -1.0;
    int resamples = 200;
    std::uint64_t bootstrap_seed = 0x5eedULL;
};

struct ReconstructArgs {
    std::string shots_path;
    std::string out;
    int restarts = 20;
    std::int64_t min_shots = 1000;
};

struct IntensityArgs {
    std::string fit_path;
    std::string which = "photons";
    int order = -1;       // <0 selects the per-level default
    double damping = -1.0; // <0 selects the per-level default
    double wmax_s = 0.0;
    double wmax_i = 0.0;
    std::size_t points = 201;
    std::string out;
};

struct ReportArgs {
    std::string shots_path;
    std::string out;
    bool fit = false;
    bool negativity = false;
    double eta = -1.0;
    int resamples = 200;
    std::uint64_t bootstrap_seed = 0x5eedULL;
};

void run_simulate(const SimulateArgs& a) {
    TwbModel m = load_model(a.model_path);
    std::vector<ShotRecord> records(std::size_t(a.shots));
    for (std::int64_t t = 0; t < a.shots; ++t) {
        RngState rng = substream(a.seed, std::uint64_t(t));
        records[std::size_t(t)] = sample_shot(m, rng);
    }
    save_shots(a.out, records);
}

CriteriaReport analyze_histogram(const JointHistogram& h, double eta, int resamples,
                                 std::uint64_t seed) {
    CriteriaOptions opts;
    opts.eta_reference = eta;
    opts.bootstrap_resamples = resamples;
    opts.bootstrap_seed = seed;
    return evaluate_criteria(h, opts);
}

void run_analyze(const AnalyzeArgs& a, const std::string& config) {
    JointHistogram h = histogram_from_shots(load_shots(a.shots_path));
    ReportDocument doc;
    doc.criteria = analyze_histogram(h, a.eta, a.resamples, a.bootstrap_seed);
    doc.inputs.push_back({a.shots_path, fnv1a64_file(a.shots_path)});
    doc.seed = a.bootstrap_seed;
    doc.config_echo = config;
    save_report(a.out, doc);
}

void run_reconstruct(const ReconstructArgs& a) {
    JointHistogram h = histogram_from_shots(load_shots(a.shots_path));
    FitOptions opts;
    opts.restarts = a.restarts;
    opts.min_shots = a.min_shots;
    ReconstructionResult r = fit_model(h, opts);
    save_reconstruction(a.out, r);
}

void run_intensity(const IntensityArgs& a) {
    TwbModel m = load_model(a.fit_path);
    CountLabel level = a.which == "detected" ? CountLabel::detected : CountLabel::photons;
    // defaults sit comfortably inside each level's damping convergence radius
    int order = a.order >= 0 ? a.order : (level == CountLabel::detected ? 200 : 80);
    double damping = a.damping > 0.0 ? a.damping : (level == CountLabel::detected ? 0.89 : 0.5);
    GridSpec spec;
    spec.w_max_s = a.wmax_s;
    spec.w_max_i = a.wmax_i;
    spec.points = a.points;
    IntensityGrid g = model_quasi_convolution(m, order, spec, damping, level);
    save_grid(a.out, g);
}

void run_report(const ReportArgs& a, const std::string& config) {
    JointHistogram h = histogram_from_shots(load_shots(a.shots_path));
    ReportDocument doc;
    doc.criteria = analyze_histogram(h, a.eta, a.resamples, a.bootstrap_seed);
    doc.inputs.push_back({a.shots_path, fnv1a64_file(a.shots_path)});
    doc.seed = a.bootstrap_seed;
    doc.config_echo = config;
    if (a.fit || a.negativity) {
        ReconstructionResult r = fit_model(h);
        if (a.negativity) {
            IntensityGrid g = model_quasi_convolution(r.model, 200, {}, 0.89,
                                                      CountLabel::detected);
            doc.negativity = negativity_report(g);
        }
        doc.reconstruction = std::move(r);
    }
    save_report(a.out, doc);
}

} // namespace

int cli_main(int argc, char** argv) {
    CLI::App app{"mesoscopic twin-beam photon statistics toolkit"};
    app.require_subcommand(1);

    SimulateArgs sim;
    CLI::App* c_sim = app.add_subcommand("simulate", "sample shots from a model file");
    c_sim->add_option("--model", sim.model_path, "model JSON file")->required();
    c_sim->add_option("--shots", sim.shots, "number of shots")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    c_sim->add_option("--seed", sim.seed, "RNG seed")->required();
    c_sim->add_option("--out", sim.out, "output shots CSV")->required();

    AnalyzeArgs ana;
    CLI::App* c_ana = app.add_subcommand("analyze", "nonclassicality criteria for a shots file");
    c_ana->add_option("shots", ana.shots_path, "shots CSV")->required();
    c_ana->add_option("--out", ana.out, "output report JSON")->required();
    c_ana->add_option("--eta", ana.eta, "reference efficiency for the R consistency note");
    c_ana->add_option("--resamples", ana.resamples, "bootstrap resamples")
        ->capture_default_str();
    c_ana->add_option("--bootstrap-seed", ana.bootstrap_seed, "bootstrap RNG seed")
        ->capture_default_str();

    ReconstructArgs rec;
    CLI::App* c_rec = app.add_subcommand("reconstruct", "fit the three-part model to a shots file");
    c_rec->add_option("shots", rec.shots_path, "shots CSV")->required();
    c_rec->add_option("--out", rec.out, "output fit JSON")->required();
    c_rec->add_option("--restarts", rec.restarts, "optimizer restarts")->capture_default_str();
    c_rec->add_option("--min-shots", rec.min_shots, "minimum shots required")
        ->capture_default_str();

    IntensityArgs inten;
    CLI::App* c_int = app.add_subcommand("intensity", "quasi-distribution grid from a model/fit file");
    c_int->add_option("fit", inten.fit_path, "model or fit JSON")->required();
    c_int->add_option("--which", inten.which, "photons or detected")
        ->check(CLI::IsMember({"photons", "detected"}))
        ->capture_default_str();
    c_int->add_option("--order", inten.order, "series order K (default per level)");
    c_int->add_option("--damping", inten.damping, "damping q in (0,1] (default per level)");
    c_int->add_option("--wmax-s", inten.wmax_s, "signal axis extent (0 = auto)");
    c_int->add_option("--wmax-i", inten.wmax_i, "idler axis extent (0 = auto)");
    c_int->add_option("--points", inten.points, "grid points per axis")->capture_default_str();
    c_int->add_option("--out", inten.out, "output grid CSV")->required();

    ReportArgs rep;
    CLI::App* c_rep = app.add_subcommand("report", "full analysis document for a shots file");
    c_rep->add_option("shots", rep.shots_path, "shots CSV")->required();
    c_rep->add_option("--out", rep.out, "output document JSON")->required();
    c_rep->add_flag("--fit", rep.fit, "include a model reconstruction");
    c_rep->add_flag("--negativity", rep.negativity,
                    "include the detected-level negativity block (implies --fit)");
    c_rep->add_option("--eta", rep.eta, "reference efficiency for the R consistency note");
    c_rep->add_option("--resamples", rep.resamples, "bootstrap resamples")
        ->capture_default_str();
    c_rep->add_option("--bootstrap-seed", rep.bootstrap_seed, "bootstrap RNG seed")
        ->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    std::string config = echo_args(argc, argv);
    try {
        if (c_sim->parsed()) run_simulate(sim);
        if (c_ana->parsed()) run_analyze(ana, config);
        if (c_rec->parsed()) run_reconstruct(rec);
        if (c_int->parsed()) run_intensity(inten);
        if (c_rep->parsed()) run_report(rep, config);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

} // namespace twb
