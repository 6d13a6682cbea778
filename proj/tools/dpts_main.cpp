// dpts - point-set toolkit: data generation, offset-grid embedding,
// diffusion training, synthesis, evaluation and input optimization.

#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <CLI11.hpp>

#include "dpts/core.hpp"
#include "dpts/density.hpp"
#include "dpts/diffusion.hpp"
#include "dpts/metrics.hpp"
#include "dpts/optimize.hpp"
#include "dpts/runconfig.hpp"
#include "dpts/samplers.hpp"
#include "dpts/transport.hpp"
#include "dpts/unet.hpp"

namespace fs = std::filesystem;
using namespace dpts;

namespace {

using Scalar = float;

struct GlobalOpts {
    uint64_t seed = 0;
    std::string config;
    std::string out;
    int threads = 0;
};

void apply_threads(int threads) {
#ifdef _OPENMP
    if (threads > 0) omp_set_num_threads(threads);
#else
    (void)threads;
#endif
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (!fs::is_directory(dir)) throw DataError("cannot create directory: " + dir);
}

DensitySpec make_density(const std::string& name, double bound) {
    return DensitySpec::from_name(name, bound);
}

// ---------------------------------------------------------------- gen ----

struct GenOpts {
    std::string sampler = "whitenoise";
    int n = 256;
    int count = 1;
    std::string density = "uniform";
    double density_bound = 0.0;
    std::string base = "whitenoise";
    double gamma = 0.68;
    bool no_scramble = false;
    int64_t gen_x = 0, gen_y = 0;  // rank-1 generator override (0 = table)
};

int run_gen(const GlobalOpts& g, GenOpts& o, RunConfig& rc) {
    if (g.out.empty()) throw UsageError("gen: --out directory required");
    ensure_dir(g.out);
    SeededRng root(g.seed, 100);
    DensitySpec density = make_density(o.density, o.density_bound);
    for (int i = 0; i < o.count; ++i) {
        SeededRng rng = root.fork(uint64_t(i));
        PointSet ps;
        if (o.sampler == "whitenoise") {
            ps = samplers::whitenoise(o.n, rng);
        } else if (o.sampler == "stratified") {
            ps = samplers::stratified_jitter(o.n, rng);
        } else if (o.sampler == "sobol_owen") {
            ps = samplers::sobol_owen(o.n, rng, !o.no_scramble);
        } else if (o.sampler == "rank1") {
            if (o.gen_x != 0 || o.gen_y != 0) {
                Point2 shift{rng.next_double(), rng.next_double()};
                ps = samplers::rank1_lattice(o.n, {o.gen_x, o.gen_y}, shift);
            } else {
                ps = samplers::rank1_lattice(o.n, rng);
            }
        } else if (o.sampler == "poisson") {
            ps = samplers::poisson_disk(o.n, rng, o.gamma);
        } else if (o.sampler == "rejection") {
            ps = samplers::rejection_sample(o.base, density, o.n, rng);
        } else if (o.sampler == "ramp_exact") {
            ps = samplers::warp_ramp(samplers::whitenoise(o.n, rng), DensitySpec::linear_ramp());
        } else {
            throw UsageError("gen: unknown sampler '" + o.sampler + "'");
        }
        write_pointset(ps, (fs::path(g.out) / pointset_filename(i)).string());
    }
    rc.save((fs::path(g.out) / "config.txt").string());
    std::printf("gen: wrote %d point sets of n=%d to %s\n", o.count, o.n, g.out.c_str());
    return 0;
}

// -------------------------------------------------------------- embed ----

struct EmbedOpts {
    std::string in;
    int side = 16;
};

int run_embed(const GlobalOpts& g, EmbedOpts& o, RunConfig& rc) {
    if (g.out.empty()) throw UsageError("embed: --out directory required");
    if (o.in.empty()) throw UsageError("embed: --in directory required");
    ensure_dir(g.out);
    std::vector<std::string> files = list_pointset_files(o.in);
    int stratified_count = 0, lap_count = 0;
    std::vector<transport::GridField> fields(files.size());
    std::exception_ptr error;  // exceptions must not unwind out of the parallel region
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 1) reduction(+ : stratified_count, lap_count)
#endif
    for (size_t i = 0; i < files.size(); ++i) {
        try {
            PointSet ps = read_pointset(files[i]);
            if (transport::detect_stratified(ps, o.side)) stratified_count += 1;
            else lap_count += 1;
            fields[i] = transport::embed(ps, o.side);
        } catch (...) {
#ifdef _OPENMP
#pragma omp critical
#endif
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);
    for (size_t i = 0; i < files.size(); ++i)
        transport::write_gridfield(fields[i], (fs::path(g.out) / transport::gridfield_filename(int(i))).string());
    rc.save((fs::path(g.out) / "config.txt").string());
    std::printf("embed: %zu fields at side %d (%d stratified fast path, %d via assignment)\n", files.size(),
                o.side, stratified_count, lap_count);
    return 0;
}

// -------------------------------------------------------------- train ----

struct TrainOpts {
    std::vector<std::string> data;  // side=dir entries
    std::vector<int> sides;
    int batch = 8;
    int steps = 0;
    int epochs = 0;
    double lr = 1e-3;
    int T = 1000;
    double beta = 1e-2;
    bool sigma_literal = false;
    double data_scale = 1.0;
    int checkpoint_every = 5000;
    int unet_levels = 3;
    int unet_base = 32;
    std::vector<int> unet_mults = {1, 2, 2};
    int time_embed = 128;
    std::string resume;
    std::string loss_csv;
};

int run_train(const GlobalOpts& g, TrainOpts& o, RunConfig& rc) {
    if (g.out.empty()) throw UsageError("train: --out weights path required");
    diffusion::TrainConfig cfg;
    cfg.batch = o.batch;
    cfg.steps = o.steps;
    cfg.epochs = o.epochs;
    cfg.lr = o.lr;
    cfg.seed = g.seed;
    cfg.data_scale = o.data_scale;
    cfg.checkpoint_every = o.checkpoint_every;
    cfg.schedule.T = o.T;
    cfg.schedule.beta = o.beta;
    cfg.schedule.sigma_literal_beta = o.sigma_literal;
    cfg.unet_config.levels = o.unet_levels;
    cfg.unet_config.base_channels = o.unet_base;
    cfg.unet_config.channel_mult = o.unet_mults;
    cfg.unet_config.time_embed_dim = o.time_embed;
    cfg.checkpoint_path = g.out;
    cfg.loss_csv_path = o.loss_csv;

    std::map<int, std::vector<transport::GridField>> datasets;
    cfg.sides.clear();
    for (const std::string& entry : o.data) {
        size_t eq = entry.find('=');
        if (eq == std::string::npos) throw UsageError("train: --data expects side=dir, got '" + entry + "'");
        int side = std::stoi(entry.substr(0, eq));
        std::string dir = entry.substr(eq + 1);
        std::vector<transport::GridField> fields;
        for (int i = 0;; ++i) {
            fs::path p = fs::path(dir) / transport::gridfield_filename(i);
            if (!fs::exists(p)) break;
            fields.push_back(transport::read_gridfield(p.string()));
        }
        if (fields.empty()) throw DataError("train: no field_*.gfld files in " + dir);
        datasets[side] = std::move(fields);
        cfg.sides.push_back(side);
    }
    if (!o.sides.empty()) cfg.sides = o.sides;

    diffusion::Trainer<Scalar> trainer(cfg, std::move(datasets));
    if (!o.resume.empty()) trainer.resume(o.resume);
    rc.save((fs::path(g.out).parent_path() / "train_config.txt").string());
    diffusion::TrainResult res = trainer.run();
    trainer.save_checkpoint(g.out);
    double last = res.loss_curve.empty() ? 0.0 : res.loss_curve.back().second;
    std::printf("train: %d steps done, final loss %.6g, weights at %s\n", trainer.step(), last, g.out.c_str());
    return 0;
}

// -------------------------------------------------------------- sample ----

struct SampleOpts {
    std::string weights;
    int side = 16;
    int count = 1;
    int steps = 0;  // 0 = full trained schedule
};

int run_sample(const GlobalOpts& g, SampleOpts& o, RunConfig& rc) {
    if (g.out.empty()) throw UsageError("sample: --out directory required");
    if (o.weights.empty()) throw UsageError("sample: --weights required");
    ensure_dir(g.out);
    unet::WeightsMeta meta;
    unet::UNet<Scalar> net = unet::load_weights<Scalar>(o.weights, nullptr, &meta);
    diffusion::Schedule sched;
    sched.T = int(meta.T);
    sched.beta = meta.beta;
    sched.sigma_literal_beta = meta.sigma_literal_beta;
    SeededRng rng(g.seed, 200);
    std::vector<transport::GridField> fields =
        diffusion::sample(net, o.side, o.count, sched, rng, o.steps, meta.data_scale);
    double escape_sum = 0.0;
    for (size_t i = 0; i < fields.size(); ++i) {
        escape_sum += transport::escape_rate(fields[i]);
        write_pointset(transport::unembed(fields[i]), (fs::path(g.out) / pointset_filename(int(i))).string());
    }
    rc.save((fs::path(g.out) / "config.txt").string());
    std::printf("sample: %d sets at side %d, mean stratum-escape rate %.4f\n", o.count, o.side,
                escape_sum / double(fields.size()));
    return 0;
}

// ---------------------------------------------------------------- eval ----

struct EvalOpts {
    std::vector<std::string> in;
    std::vector<std::string> metrics = {"l2", "mindist", "otsliced"};
    int integrands = 1024;
    int spectrum_res = 128;
    std::string density = "";
    double density_bound = 0.0;
    int density_bins = 32;
    bool unwarp = false;
    std::string violin;
    std::string spectrum_out;
};

int run_eval(const GlobalOpts& g, EvalOpts& o, RunConfig& rc) {
    if (g.out.empty()) throw UsageError("eval: --out csv path required");
    if (o.in.empty()) throw UsageError("eval: at least one --in directory required");
    std::FILE* csv = std::fopen(g.out.c_str(), "w");
    if (!csv) throw DataError("cannot open for writing: " + g.out);
    std::fprintf(csv, "group,file,metric,value\n");

    bool want_gauss = false, want_heavi = false, want_spectrum = false;
    for (const auto& m : o.metrics) {
        if (m == "gauss") want_gauss = true;
        if (m == "heaviside") want_heavi = true;
        if (m == "spectrum") want_spectrum = true;
    }
    // one integrand family shared by all groups, keyed by the run seed
    std::unique_ptr<metrics::GaussianMseEvaluator> gauss;
    std::unique_ptr<metrics::HeavisideMseEvaluator> heavi;
    if (want_gauss) gauss = std::make_unique<metrics::GaussianMseEvaluator>(o.integrands, SeededRng(g.seed, 300));
    if (want_heavi) heavi = std::make_unique<metrics::HeavisideMseEvaluator>(o.integrands, SeededRng(g.seed, 301));

    std::map<std::string, std::vector<double>> violin_groups;
    for (const std::string& dir : o.in) {
        std::string group = fs::path(dir).filename().string();
        if (group.empty()) group = dir;
        std::vector<std::string> files = list_pointset_files(dir);
        std::vector<PointSet> sets;
        sets.reserve(files.size());
        for (const auto& f : files) {
            PointSet ps = read_pointset(f);
            if (o.unwarp) {
                if (o.density.empty()) throw UsageError("eval: --unwarp needs --density");
                ps = metrics::unwarp(ps, make_density(o.density, o.density_bound));
            }
            sets.push_back(std::move(ps));
        }
        for (size_t i = 0; i < sets.size(); ++i) {
            std::string fname = fs::path(files[i]).filename().string();
            for (const std::string& m : o.metrics) {
                double value = 0.0;
                if (m == "l2") value = metrics::l2_discrepancy(sets[i]);
                else if (m == "mindist") value = metrics::min_distance(sets[i]);
                else if (m == "otsliced") value = metrics::ot_energy(sets[i], metrics::OtMode::kSliced);
                else if (m == "otexact") value = metrics::ot_energy(sets[i], metrics::OtMode::kExactSmall);
                else if (m == "gauss") value = gauss->mse(sets[i]);
                else if (m == "heaviside") value = heavi->mse(sets[i]);
                else if (m == "spectrum") continue;  // handled per group below
                else if (m == "density") continue;
                else throw UsageError("eval: unknown metric '" + m + "'");
                std::fprintf(csv, "%s,%s,%s,%.17g\n", group.c_str(), fname.c_str(), m.c_str(), value);
                violin_groups[group + ":" + m].push_back(value);
            }
        }
        for (const std::string& m : o.metrics) {
            if (m == "density") {
                if (o.density.empty()) throw UsageError("eval: density metric needs --density");
                double v = metrics::density_match(sets, make_density(o.density, o.density_bound), o.density_bins);
                std::fprintf(csv, "%s,-,density_l1,%.17g\n", group.c_str(), v);
            }
        }
        if (want_spectrum) {
            metrics::SpectrumGrid grid = metrics::power_spectrum(sets, o.spectrum_res);
            metrics::RadialSpectrum rs = metrics::radial_mean(grid, sets.front().n());
            if (!o.spectrum_out.empty()) {
                metrics::write_spectrum_grid(grid, o.spectrum_out + "." + group + ".f64");
                metrics::write_radial_csv(rs, o.spectrum_out + "." + group + ".radial.csv");
            }
            for (size_t b = 0; b < rs.nu.size(); ++b) {
                if (std::isnan(rs.power[b])) continue;
                std::fprintf(csv, "%s,-,radial_%zu,%.17g\n", group.c_str(), b + 1, rs.power[b]);
            }
        }
    }
    std::fclose(csv);
    if (!o.violin.empty()) metrics::violin_export(violin_groups, o.violin);
    rc.save((g.out + ".config.txt"));
    std::printf("eval: wrote %s\n", g.out.c_str());
    return 0;
}

// ------------------------------------------------------------ optimize ----

struct OptimizeOpts {
    std::string weights;
    int side = 16;
    int steps = 100;
    int iters = 200;
    double lr = 0.05;
};

int run_optimize(const GlobalOpts& g, OptimizeOpts& o, RunConfig& rc) {
    if (g.out.empty()) throw UsageError("optimize: --out directory required");
    if (o.weights.empty()) throw UsageError("optimize: --weights required");
    ensure_dir(g.out);
    unet::WeightsMeta meta;
    unet::UNet<Scalar> net = unet::load_weights<Scalar>(o.weights, nullptr, &meta);
    opt::OptimizeConfig cfg;
    cfg.steps = o.steps;
    cfg.iterations = o.iters;
    cfg.lr = o.lr;
    cfg.seed = g.seed;
    cfg.data_scale = meta.data_scale;
    cfg.schedule.T = int(meta.T);
    cfg.schedule.beta = meta.beta;
    cfg.schedule.sigma_literal_beta = meta.sigma_literal_beta;

    opt::InputOptimizer<Scalar> optimizer(net, o.side, cfg);
    opt::OptimizeResult res = optimizer.run();
    write_pointset(res.before, (fs::path(g.out) / "before.txt").string());
    write_pointset(res.after, (fs::path(g.out) / "after.txt").string());
    std::FILE* traj = std::fopen((fs::path(g.out) / "trajectory.csv").string().c_str(), "w");
    if (!traj) throw DataError("cannot write trajectory");
    std::fprintf(traj, "iteration,objective\n");
    for (size_t i = 0; i < res.trajectory.size(); ++i) std::fprintf(traj, "%zu,%.17g\n", i, res.trajectory[i]);
    std::fclose(traj);
    rc.save((fs::path(g.out) / "config.txt").string());
    std::printf("optimize: D^2 %.6g -> %.6g, escape %.4f -> %.4f\n", res.trajectory.front(),
                *std::min_element(res.trajectory.begin(), res.trajectory.end()), res.escape_before, res.escape_after);
    return 0;
}

// Pre-scan argv for --config and apply the file before CLI11 parses the
// overriding flags.
std::string find_config_arg(int argc, char** argv) {
    for (int i = 1; i < argc; ++i) {
        std::string a = argv[i];
        if (a == "--config" && i + 1 < argc) return argv[i + 1];
        if (a.rfind("--config=", 0) == 0) return a.substr(9);
    }
    return "";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dpts - learning 2-d point set generators with grid-offset diffusion"};
    app.require_subcommand(1);
    app.fallthrough(false);

    GlobalOpts g;
    app.add_option("--seed", g.seed, "root seed; all stage randomness derives from it");
    app.add_option("--config", g.config, "key=value file applied before flag overrides");
    app.add_option("--out", g.out, "output path (directory or file, per subcommand)");
    app.add_option("--threads", g.threads, "worker threads (0 = library default)");

    GenOpts gen;
    EmbedOpts embed;
    TrainOpts train;
    SampleOpts sample;
    EvalOpts eval;
    OptimizeOpts optimize;

    CLI::App* c_gen = app.add_subcommand("gen", "generate point sets with a built-in sampler");
    c_gen->add_option("--sampler", gen.sampler,
                      "whitenoise|stratified|sobol_owen|rank1|poisson|rejection|ramp_exact");
    c_gen->add_option("--n", gen.n, "points per set");
    c_gen->add_option("--count", gen.count, "number of sets");
    c_gen->add_option("--density", gen.density, "uniform|ramp|blobby|<expression> (rejection)");
    c_gen->add_option("--density-bound", gen.density_bound, "rejection bound M (0 = auto probe)");
    c_gen->add_option("--base", gen.base, "base sampler for rejection");
    c_gen->add_option("--gamma", gen.gamma, "poisson-disk radius factor gamma/sqrt(n)");
    c_gen->add_flag("--no-scramble", gen.no_scramble, "plain Sobol' without Owen scrambling");
    c_gen->add_option("--gen-x", gen.gen_x, "rank-1 generator x component");
    c_gen->add_option("--gen-y", gen.gen_y, "rank-1 generator y component");

    CLI::App* c_embed = app.add_subcommand("embed", "embed point sets as offset grids");
    c_embed->add_option("--in", embed.in, "directory of pts_*.txt")->required();
    c_embed->add_option("--side", embed.side, "grid side s (n must equal s^2)");

    CLI::App* c_train = app.add_subcommand("train", "train the denoiser on embedded datasets");
    c_train->add_option("--data", train.data, "side=dir of field_*.gfld, repeatable")->required()->delimiter(',');
    c_train->add_option("--batch", train.batch, "batch size per grid size");
    c_train->add_option("--steps", train.steps, "total Adam steps");
    c_train->add_option("--epochs", train.epochs, "epochs (used when --steps 0)");
    c_train->add_option("--lr", train.lr, "Adam learning rate");
    c_train->add_option("--T", train.T, "diffusion steps");
    c_train->add_option("--beta", train.beta, "constant schedule beta");
    c_train->add_flag("--sigma-literal-beta", train.sigma_literal, "reverse noise scale = beta (not sqrt)");
    c_train->add_option("--data-scale", train.data_scale, "offset scaling applied before training");
    c_train->add_option("--checkpoint-every", train.checkpoint_every, "steps between checkpoints");
    c_train->add_option("--unet-levels", train.unet_levels, "U-Net levels");
    c_train->add_option("--unet-base", train.unet_base, "U-Net base channels");
    c_train->add_option("--unet-mults", train.unet_mults, "channel multiplier per level")->delimiter(',');
    c_train->add_option("--time-embed", train.time_embed, "time embedding width");
    c_train->add_option("--resume", train.resume, "checkpoint to resume from");
    c_train->add_option("--loss-csv", train.loss_csv, "per-step loss curve CSV");

    CLI::App* c_sample = app.add_subcommand("sample", "synthesize point sets from trained weights");
    c_sample->add_option("--weights", sample.weights, "PFWT weights file")->required();
    c_sample->add_option("--side", sample.side, "grid side of generated fields");
    c_sample->add_option("--count", sample.count, "number of sets");
    c_sample->add_option("--steps", sample.steps, "strided reverse steps (0 = trained T)");

    CLI::App* c_eval = app.add_subcommand("eval", "metric battery over point-set directories");
    c_eval->add_option("--in", eval.in, "point-set directory, repeatable")->required()->delimiter(',');
    c_eval->add_option("--metrics", eval.metrics, "l2 mindist otsliced otexact gauss heaviside spectrum density")->delimiter(',');
    c_eval->add_option("--integrands", eval.integrands, "integrand count for gauss/heaviside");
    c_eval->add_option("--spectrum-res", eval.spectrum_res, "spectrum grid resolution");
    c_eval->add_option("--density", eval.density, "target density for density/unwarp");
    c_eval->add_option("--density-bound", eval.density_bound, "density bound M (0 = auto)");
    c_eval->add_option("--density-bins", eval.density_bins, "histogram bins per axis");
    c_eval->add_flag("--unwarp", eval.unwarp, "unwarp points through the density before metrics");
    c_eval->add_option("--violin", eval.violin, "violin CSV output path");
    c_eval->add_option("--spectrum-out", eval.spectrum_out, "prefix for spectrum grid/radial files");

    CLI::App* c_opt = app.add_subcommand("optimize", "optimize initial noise for low discrepancy");
    c_opt->add_option("--weights", optimize.weights, "PFWT weights file")->required();
    c_opt->add_option("--side", optimize.side, "grid side");
    c_opt->add_option("--steps", optimize.steps, "diffusion steps of the differentiable chain");
    c_opt->add_option("--iters", optimize.iters, "Adam iterations");
    c_opt->add_option("--lr", optimize.lr, "Adam learning rate");

    // resolved-config serialization: every subcommand binds its fields
    RunConfig rc_gen, rc_embed, rc_train, rc_sample, rc_eval, rc_opt;
    auto bind_globals = [&](RunConfig& rc) {
        rc.bind_u64("seed", &g.seed);
        rc.bind_int("threads", &g.threads);
    };
    bind_globals(rc_gen);
    rc_gen.bind_string("sampler", &gen.sampler);
    rc_gen.bind_int("n", &gen.n);
    rc_gen.bind_int("count", &gen.count);
    rc_gen.bind_string("density", &gen.density);
    rc_gen.bind_double("density_bound", &gen.density_bound);
    rc_gen.bind_string("base", &gen.base);
    rc_gen.bind_double("gamma", &gen.gamma);
    rc_gen.bind_bool("no_scramble", &gen.no_scramble);

    bind_globals(rc_embed);
    rc_embed.bind_string("in", &embed.in);
    rc_embed.bind_int("side", &embed.side);

    bind_globals(rc_train);
    rc_train.bind_int("batch", &train.batch);
    rc_train.bind_int("steps", &train.steps);
    rc_train.bind_int("epochs", &train.epochs);
    rc_train.bind_double("lr", &train.lr);
    rc_train.bind_int("T", &train.T);
    rc_train.bind_double("beta", &train.beta);
    rc_train.bind_bool("sigma_literal_beta", &train.sigma_literal);
    rc_train.bind_double("data_scale", &train.data_scale);
    rc_train.bind_int("checkpoint_every", &train.checkpoint_every);
    rc_train.bind_int("unet_levels", &train.unet_levels);
    rc_train.bind_int("unet_base", &train.unet_base);
    rc_train.bind_int_list("unet_mults", &train.unet_mults);
    rc_train.bind_int("time_embed", &train.time_embed);

    bind_globals(rc_sample);
    rc_sample.bind_string("weights", &sample.weights);
    rc_sample.bind_int("side", &sample.side);
    rc_sample.bind_int("count", &sample.count);
    rc_sample.bind_int("steps", &sample.steps);

    bind_globals(rc_eval);
    rc_eval.bind_int("integrands", &eval.integrands);
    rc_eval.bind_int("spectrum_res", &eval.spectrum_res);
    rc_eval.bind_string("density", &eval.density);
    rc_eval.bind_double("density_bound", &eval.density_bound);
    rc_eval.bind_int("density_bins", &eval.density_bins);
    rc_eval.bind_bool("unwarp", &eval.unwarp);

    bind_globals(rc_opt);
    rc_opt.bind_string("weights", &optimize.weights);
    rc_opt.bind_int("side", &optimize.side);
    rc_opt.bind_int("steps", &optimize.steps);
    rc_opt.bind_int("iters", &optimize.iters);
    rc_opt.bind_double("lr", &optimize.lr);

    try {
        std::string cfg_path = find_config_arg(argc, argv);
        if (!cfg_path.empty()) {
            // the config applies to whichever subcommand follows
            std::string sub;
            for (int i = 1; i < argc; ++i) {
                std::string a = argv[i];
                for (const char* name : {"gen", "embed", "train", "sample", "eval", "optimize"}) {
                    if (a == name) {
                        sub = a;
                        break;
                    }
                }
                if (!sub.empty()) break;
            }
            RunConfig* rc = sub == "gen"        ? &rc_gen
                            : sub == "embed"    ? &rc_embed
                            : sub == "train"    ? &rc_train
                            : sub == "sample"   ? &rc_sample
                            : sub == "eval"     ? &rc_eval
                            : sub == "optimize" ? &rc_opt
                                                : nullptr;
            if (!rc) throw UsageError("--config requires a subcommand");
            rc->load(cfg_path);
        }
        app.parse(argc, argv);
        apply_threads(g.threads);
        if (c_gen->parsed()) return run_gen(g, gen, rc_gen);
        if (c_embed->parsed()) return run_embed(g, embed, rc_embed);
        if (c_train->parsed()) return run_train(g, train, rc_train);
        if (c_sample->parsed()) return run_sample(g, sample, rc_sample);
        if (c_eval->parsed()) return run_eval(g, eval, rc_eval);
        if (c_opt->parsed()) return run_optimize(g, optimize, rc_opt);
        return 2;
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const UsageError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const DataError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 4;
    }
}
