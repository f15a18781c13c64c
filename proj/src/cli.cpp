#include "lpdh/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "lpdh/checkpoint.hpp"
#include "lpdh/hazesynth.hpp"
#include "lpdh/image_io.hpp"
#include "lpdh/manifest.hpp"
#include "lpdh/metrics.hpp"
#include "lpdh/parallel.hpp"
#include "lpdh/pyramid.hpp"
#include "lpdh/training.hpp"
#include "lpdh/tucker.hpp"

namespace lpdh {

namespace fs = std::filesystem;

namespace {

struct Options {
    std::uint64_t seed = 1;
    std::string manifest = "lpdh_manifest.jsonl";
    std::size_t threads = 0;

    // synth
    std::string depth = "ramp";
    std::string out_dir;
    std::size_t count = 8;
    std::size_t height = 64;
    std::size_t width = 64;
    std::string clean_dir;

    // decompose / reconstruct / tucker / dehaze / bench inputs
    std::string input;
    std::string out;
    std::size_t levels = 3;
    std::string ranks;
    double rank_fraction = 0.5;
    double tol = 1e-4;
    int max_iter = 100;

    // train / eval / dehaze
    std::string data;
    std::string ckpt;
    std::size_t steps = 500;
    double lr = 2e-4;
    std::size_t terms = 4;
    std::string tucker = "on";
    double tucker_lambda = 0.1;
    bool tucker_on_k = false;
    bool single_unet = false;
    bool explicit_factorials = false;
    std::size_t checkpoint_every = 0;
    std::string loss_csv;
    std::string report;

    // bench
    std::size_t iters = 5;
    std::size_t bench_width = 3840;
    std::size_t bench_height = 2160;
};

Ranks parse_ranks(const std::string& s) {
    Ranks r{};
    std::stringstream ss(s);
    std::string part;
    std::size_t i = 0;
    while (std::getline(ss, part, ',')) {
        if (i >= 3) throw ContractError("--ranks expects three comma-separated values, got '" + s + "'");
        try {
            r[i++] = std::stoul(part);
        } catch (const std::exception&) {
            throw ContractError("--ranks: bad value '" + part + "'");
        }
    }
    if (i != 3) throw ContractError("--ranks expects three comma-separated values, got '" + s + "'");
    return r;
}

bool parse_on_off(const std::string& s, const char* flag) {
    if (s == "on") return true;
    if (s == "off") return false;
    throw ContractError(std::string(flag) + " expects on or off, got '" + s + "'");
}

std::string path_in(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
}

Tensor<float> to_rgb(const Tensor<float>& img) {
    if (img.dim(1) == 3) return img;
    const std::size_t hw = img.dim(2) * img.dim(3);
    Tensor<float> out({1, 3, img.dim(2), img.dim(3)});
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t p = 0; p < hw; ++p) out[c * hw + p] = img[p];
    return out;
}

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// ---- synth -----------------------------------------------------------------

void cmd_synth(const Options& o, RunManifest& m) {
    if (o.out_dir.empty()) throw ContractError("synth: --out-dir is required");
    if (o.count == 0) throw ContractError("synth: --count must be >= 1");
    ensure_dir(o.out_dir);

    std::vector<std::string> clean_files;
    if (!o.clean_dir.empty()) {
        for (const auto& e : fs::directory_iterator(o.clean_dir)) {
            const auto ext = e.path().extension().string();
            if (e.is_regular_file() && (ext == ".ppm" || ext == ".pnm")) clean_files.push_back(e.path().string());
        }
        std::sort(clean_files.begin(), clean_files.end());
        if (clean_files.empty()) throw IoError("synth: no .ppm files in " + o.clean_dir);
    }

    DepthSpec spec;
    spec.height = o.height;
    spec.width = o.width;
    if (o.depth == "ramp" || o.depth == "radial" || o.depth == "noise") {
        spec.kind = parse_depth_kind(o.depth);
    } else {
        spec.kind = DepthKind::file;
        spec.map = read_depth_map(o.depth);
    }

    const auto seeds = pair_seeds(o.seed, o.count);
    std::vector<PairRecord> records;
    for (std::size_t i = 0; i < o.count; ++i) {
        Tensor<float> source;
        if (!clean_files.empty()) source = to_rgb(read_pnm(clean_files[i % clean_files.size()]));
        const SynthPair pair = synthesize_pair(seeds[i], spec, clean_files.empty() ? nullptr : &source);
        char base[32];
        std::snprintf(base, sizeof base, "pair_%04zu", i);
        PairRecord r{std::string(base) + "_hazy.ppm", std::string(base) + "_clean.ppm", pair.params.airlight,
                     pair.params.beta, seeds[i]};
        write_ppm(path_in(o.out_dir, r.hazy), pair.hazy);
        write_ppm(path_in(o.out_dir, r.clean), pair.clean);
        m.add_artifact(path_in(o.out_dir, r.hazy));
        m.add_artifact(path_in(o.out_dir, r.clean));
        records.push_back(r);
    }
    write_pairs_csv(o.out_dir, records);
    m.add_artifact(path_in(o.out_dir, kPairsFile));
    std::cout << "wrote " << records.size() << " pairs to " << o.out_dir << '\n';
}

// ---- decompose / reconstruct --------------------------------------------------

void cmd_decompose(const Options& o, RunManifest& m) {
    if (o.out_dir.empty()) throw ContractError("decompose: --out-dir is required");
    const Tensor<float> img = read_pnm(o.input);
    const auto t0 = Clock::now();
    const PaddedPyramid<float> pp = decompose_padded(img, o.levels);
    m.stage_seconds["decompose"] = seconds_since(t0);
    ensure_dir(o.out_dir);

    nlohmann::json meta;
    meta["levels"] = o.levels;
    meta["height"] = pp.height;
    meta["width"] = pp.width;
    meta["channels"] = img.dim(1);
    meta["source"] = fs::path(o.input).filename().string();
    std::vector<std::string> files;
    for (std::size_t l = 0; l < pp.pyramid.levels(); ++l) {
        const Tensor<float>& band = pp.pyramid.high_bands[l];
        const std::string stem = "high_" + std::to_string(l + 1);
        Tensor<float> view(band.shape());
        for (std::size_t i = 0; i < band.numel(); ++i) view[i] = band[i] + 0.5f;
        write_ppm(path_in(o.out_dir, stem + ".ppm"), to_rgb(view));
        write_f32(path_in(o.out_dir, stem + ".f32"), band);
        files.push_back(stem);
    }
    write_ppm(path_in(o.out_dir, "low.ppm"), to_rgb(pp.pyramid.low_band));
    write_f32(path_in(o.out_dir, "low.f32"), pp.pyramid.low_band);
    meta["high_bands"] = files;
    meta["low_band"] = "low";
    {
        std::ofstream os(path_in(o.out_dir, "meta.json"));
        if (!os) throw IoError("cannot write " + path_in(o.out_dir, "meta.json"));
        os << meta.dump(2) << '\n';
    }
    for (const auto& f : files) m.add_artifact(path_in(o.out_dir, f + ".f32"));
    m.add_artifact(path_in(o.out_dir, "low.f32"));
    std::cout << "wrote " << o.levels << " high bands and the low band to " << o.out_dir << '\n';
}

void cmd_reconstruct(const Options& o, RunManifest& m) {
    if (o.out.empty()) throw ContractError("reconstruct: --out is required");
    const std::string meta_path = path_in(o.input, "meta.json");
    std::ifstream is(meta_path);
    if (!is) throw IoError("cannot open " + meta_path);
    nlohmann::json meta;
    try {
        is >> meta;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("bad metadata in " + meta_path + ": " + e.what());
    }
    PaddedPyramid<float> pp;
    try {
        pp.height = meta.at("height").get<std::size_t>();
        pp.width = meta.at("width").get<std::size_t>();
        for (const auto& f : meta.at("high_bands")) {
            pp.pyramid.high_bands.push_back(read_f32(path_in(o.input, f.get<std::string>() + ".f32")));
        }
        pp.pyramid.low_band = read_f32(path_in(o.input, meta.at("low_band").get<std::string>() + ".f32"));
    } catch (const nlohmann::json::exception& e) {
        throw IoError("bad metadata in " + meta_path + ": " + e.what());
    }
    const auto t0 = Clock::now();
    const Tensor<float> img = reconstruct_cropped(pp);
    m.stage_seconds["reconstruct"] = seconds_since(t0);
    write_ppm(o.out, to_rgb(img));
    m.add_artifact(o.out);
    std::cout << "wrote " << o.out << '\n';
}

// ---- tucker --------------------------------------------------------------------

void cmd_tucker(const Options& o, RunManifest& m) {
    const Tensor<float> img = read_pnm(o.input);
    TuckerConfig cfg;
    if (!o.ranks.empty()) cfg.ranks = parse_ranks(o.ranks);
    cfg.rank_fraction = o.rank_fraction;
    cfg.tol = o.tol;
    cfg.max_iter = o.max_iter;
    cfg.seed = o.seed;
    cfg.validate();
    const Tensor<double> x = nchw_to_hwc(img.cast<double>());
    const auto t0 = Clock::now();
    const HooiTrace trace = hooi_trace(x, cfg);
    m.stage_seconds["tucker"] = seconds_since(t0);
    const Ranks r = trace.decomp.ranks();
    std::cout << "ranks " << r[0] << ',' << r[1] << ',' << r[2] << "  iterations " << trace.iterations
              << "  relative_error " << trace.final_error() << '\n';
    if (!o.out.empty()) {
        write_ppm(o.out, to_rgb(hwc_to_nchw(reconstruct(trace.decomp)).cast<float>()));
        m.add_artifact(o.out);
    }
}

// ---- train / dehaze / eval ---------------------------------------------------

ModelConfig model_config_from(const Options& o) {
    ModelConfig mc;
    mc.terms = o.terms;
    mc.single_unet = o.single_unet;
    mc.explicit_factorials = o.explicit_factorials;
    mc.tucker_enabled = parse_on_off(o.tucker, "--tucker");
    mc.seed = o.seed;
    mc.tucker.seed = o.seed;
    mc.validate();
    return mc;
}

void cmd_train(const Options& o, RunManifest& m) {
    if (o.data.empty()) throw ContractError("train: --data is required");
    if (o.out.empty()) throw ContractError("train: --out is required");
    const auto pairs = load_pairs(o.data);
    if (pairs.empty()) throw ContractError("train: no pairs listed in " + o.data);

    DehazeModel<float> model(model_config_from(o));
    TrainConfig tc;
    tc.lr = o.lr;
    tc.steps = o.steps;
    tc.tucker_lambda = o.tucker_lambda;
    tc.tucker_on_k = o.tucker_on_k;
    tc.seed = o.seed;
    tc.checkpoint_every = o.checkpoint_every;
    tc.checkpoint_path = o.out;

    const auto t0 = Clock::now();
    const std::size_t report_every = std::max<std::size_t>(1, o.steps / 10);
    const TrainResult<float> res = train<float>(model, pairs, tc, [&](const LossRecord& r) {
        if (r.step == 1 || r.step % report_every == 0) {
            std::cout << "step " << r.step << "  data " << r.data_loss << "  reg " << r.reg_loss << "  total "
                      << r.total << '\n';
        }
    });
    m.stage_seconds["train"] = seconds_since(t0);

    const std::string loss_csv = o.loss_csv.empty() ? o.out + ".loss.csv" : o.loss_csv;
    write_loss_csv(loss_csv, res.curve);
    m.add_artifact(o.out);
    m.add_artifact(loss_csv);
    std::cout << "parameters " << model.parameter_count() << "  initial loss " << res.curve.front().total
              << "  final loss " << res.curve.back().total << '\n';

    if (!o.report.empty()) {
        const QualityReport q = eval_pairs<float>(model, pairs);
        q.write_csv(o.report);
        m.add_artifact(o.report);
        std::cout << "mean psnr out " << q.mean.psnr_out << "  hazy " << q.mean.psnr_hazy << "  gain "
                  << q.mean_psnr_gain() << " dB\n";
    }
}

void cmd_dehaze(const Options& o, RunManifest& m) {
    if (o.out.empty()) throw ContractError("dehaze: --out is required");
    if (o.ckpt.empty()) throw ContractError("dehaze: --ckpt is required");
    const DehazeModel<float> model = load_model<float>(o.ckpt);
    const Tensor<float> img = to_rgb(read_pnm(o.input));
    StageTimes times;
    const FusionOutputs<float> f = dehaze_forward(model, img, ForwardMode::infer, &times);
    m.add_stages(times);
    write_ppm(o.out, f.output.value());
    m.add_artifact(o.out);
    std::cout << "wrote " << o.out << " in " << times.total() << " s\n";
}

void cmd_eval(const Options& o, RunManifest& m) {
    if (o.data.empty()) throw ContractError("eval: --data is required");
    if (o.ckpt.empty()) throw ContractError("eval: --ckpt is required");
    const DehazeModel<float> model = load_model<float>(o.ckpt);
    std::vector<PairFiles> files;
    for (const auto& r : read_pairs_csv(o.data)) {
        files.push_back({r.hazy, path_in(o.data, r.hazy), path_in(o.data, r.clean)});
    }
    const auto t0 = Clock::now();
    const QualityReport q = eval_dataset(model, files);
    m.stage_seconds["eval"] = seconds_since(t0);
    if (!o.report.empty()) {
        q.write_csv(o.report);
        m.add_artifact(o.report);
    }
    std::cout << "pairs " << q.rows.size() << "  skipped " << q.skipped << "  psnr out " << q.mean.psnr_out
              << "  ssim out " << q.mean.ssim_out << "  psnr hazy " << q.mean.psnr_hazy << "  ssim hazy "
              << q.mean.ssim_hazy << '\n';
}

// ---- bench ---------------------------------------------------------------------

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void cmd_bench(const Options& o, RunManifest& m) {
    if (o.iters < 3) throw ContractError("bench: --iters must be >= 3");
    Tensor<float> img;
    if (!o.input.empty()) {
        img = to_rgb(read_pnm(o.input));
    } else {
        Xoshiro256 rng(o.seed);
        img = synthetic_scene(o.bench_height, o.bench_width, rng);
    }
    const DehazeModel<float> model = o.ckpt.empty() ? DehazeModel<float>([&] {
        ModelConfig mc;
        mc.seed = o.seed;
        return mc;
    }())
                                                    : load_model<float>(o.ckpt);

    std::vector<StageTimes> runs;
    std::vector<double> wall;
    for (std::size_t i = 0; i < o.iters; ++i) {
        StageTimes t;
        const auto t0 = Clock::now();
        const FusionOutputs<float> f = dehaze_forward(model, img, ForwardMode::infer, &t);
        wall.push_back(seconds_since(t0));
        runs.push_back(t);
    }
    auto stage = [&](double StageTimes::*field) {
        std::vector<double> v;
        for (const auto& r : runs) v.push_back(r.*field);
        return median(v);
    };
    StageTimes med;
    med.decompose = stage(&StageTimes::decompose);
    med.bottom_net = stage(&StageTimes::bottom_net);
    med.tucker = stage(&StageTimes::tucker);
    med.k_net = stage(&StageTimes::k_net);
    med.modulate = stage(&StageTimes::modulate);
    med.reconstruct = stage(&StageTimes::reconstruct);
    std::vector<double> totals;
    for (const auto& r : runs) totals.push_back(r.total());
    const double total = median(totals);
    const double mp = static_cast<double>(img.dim(2) * img.dim(3)) / 1e6;

    m.add_stages(med);
    m.stage_seconds["total"] = total;
    m.stage_seconds["wall"] = median(wall);
    std::printf("input %zux%zu, %zu iterations, %zu threads (median seconds)\n", img.dim(3), img.dim(2), o.iters,
                thread_count());
    std::printf("  decompose    %9.4f\n", med.decompose);
    std::printf("  bottom_net   %9.4f\n", med.bottom_net);
    std::printf("  tucker       %9.4f\n", med.tucker);
    std::printf("  k_net        %9.4f\n", med.k_net);
    std::printf("  modulate     %9.4f\n", med.modulate);
    std::printf("  reconstruct  %9.4f\n", med.reconstruct);
    std::printf("  total        %9.4f  (stage medians sum to %.4f)\n", total, med.total());
    std::printf("  throughput   %9.3f MP/s\n", mp / total);
}

// Records every option of `sub`, using the default text for unset ones.
void record_flags(const CLI::App* sub, RunManifest& m) {
    for (const CLI::Option* opt : sub->get_options()) {
        const std::string name = opt->get_name();
        if (name == "--help" || name == "-h") continue;
        if (opt->count() > 0) {
            std::string v;
            for (const auto& r : opt->results()) v += (v.empty() ? "" : ",") + r;
            m.flags[name] = v.empty() ? "true" : v;
        } else {
            m.flags[name] = opt->get_default_str();
        }
    }
}

} // namespace

int run_cli(int argc, char** argv) {
    Options o;
    CLI::App app{"Laplacian-pyramid dehazing toolkit"};
    app.require_subcommand(1);
    app.add_option("--threads", o.threads, "Worker threads (default: LPDH_THREADS or hardware)");
    app.add_option("--manifest", o.manifest, "Append a JSON run record to this file")->capture_default_str();

    auto* synth = app.add_subcommand("synth", "Synthesize hazy/clean pairs");
    synth->add_option("--seed", o.seed, "Random seed")->capture_default_str();
    synth->add_option("--depth", o.depth, "ramp | radial | noise | path to a depth image")->capture_default_str();
    synth->add_option("--out-dir", o.out_dir, "Output directory")->required();
    synth->add_option("--count", o.count, "Number of pairs")->capture_default_str();
    synth->add_option("--height", o.height, "Generated image height")->capture_default_str();
    synth->add_option("--width", o.width, "Generated image width")->capture_default_str();
    synth->add_option("--clean", o.clean_dir, "Directory of clean .ppm images to haze instead of generated scenes");

    auto* decomp = app.add_subcommand("decompose", "Split an image into Laplacian bands");
    decomp->add_option("input", o.input, "Input image (.ppm)")->required();
    decomp->add_option("--levels", o.levels, "Number of high bands")->capture_default_str();
    decomp->add_option("--out-dir", o.out_dir, "Output directory")->required();

    auto* recon = app.add_subcommand("reconstruct", "Rebuild an image from a decompose directory");
    recon->add_option("input", o.input, "Directory written by decompose")->required();
    recon->add_option("--out", o.out, "Output image (.ppm)")->required();

    auto* tucker = app.add_subcommand("tucker", "Low-rank Tucker approximation of an image");
    tucker->add_option("input", o.input, "Input image (.ppm)")->required();
    tucker->add_option("--out", o.out, "Reconstructed image (.ppm)");
    tucker->add_option("--ranks", o.ranks, "Ranks P,Q,R (default: rank fraction of each mode)");
    tucker->add_option("--rank-fraction", o.rank_fraction, "Fraction of each mode kept")->capture_default_str();
    tucker->add_option("--tol", o.tol, "Stop when a sweep improves the error by less than this")->capture_default_str();
    tucker->add_option("--max-iter", o.max_iter, "Iteration cap")->capture_default_str();
    tucker->add_option("--seed", o.seed, "Recorded seed")->capture_default_str();

    auto* trn = app.add_subcommand("train", "Train a dehazing model");
    trn->add_option("--data", o.data, "Directory written by synth")->required();
    trn->add_option("--steps", o.steps, "Optimizer steps")->capture_default_str();
    trn->add_option("--lr", o.lr, "Adam learning rate")->capture_default_str();
    trn->add_option("--terms", o.terms, "Taylor terms n (pyramid levels + 1)")->capture_default_str();
    trn->add_option("--tucker", o.tucker, "on | off")->capture_default_str();
    trn->add_option("--tucker-lambda", o.tucker_lambda, "Weight of the Tucker term")->capture_default_str();
    trn->add_flag("--tucker-on-k", o.tucker_on_k, "Also regularize K");
    trn->add_flag("--single-unet", o.single_unet, "Replace the K network by a parameter-free map");
    trn->add_flag("--explicit-factorials", o.explicit_factorials, "Scale bands by 1/(n-l)!");
    trn->add_option("--seed", o.seed, "Random seed")->capture_default_str();
    trn->add_option("--out", o.out, "Checkpoint path")->required();
    trn->add_option("--checkpoint-every", o.checkpoint_every, "Also save every N steps (0: only at the end)")
        ->capture_default_str();
    trn->add_option("--loss-csv", o.loss_csv, "Loss curve (default: <out>.loss.csv)");
    trn->add_option("--report", o.report, "Evaluate the training pairs after training and write this CSV");

    auto* dhz = app.add_subcommand("dehaze", "Dehaze one image");
    dhz->add_option("input", o.input, "Hazy image (.ppm)")->required();
    dhz->add_option("--ckpt", o.ckpt, "Model checkpoint")->required();
    dhz->add_option("--out", o.out, "Output image (.ppm)")->required();

    auto* ev = app.add_subcommand("eval", "Score a model on a pair directory");
    ev->add_option("--data", o.data, "Directory written by synth")->required();
    ev->add_option("--ckpt", o.ckpt, "Model checkpoint")->required();
    ev->add_option("--report", o.report, "Write the per-image CSV here");

    auto* bench = app.add_subcommand("bench", "Time the inference stages");
    bench->add_option("input", o.input, "Image to time (default: synthetic)");
    bench->add_option("--iters", o.iters, "Timed iterations (>= 3)")->capture_default_str();
    bench->add_option("--ckpt", o.ckpt, "Model checkpoint (default: freshly initialized)");
    bench->add_option("--width", o.bench_width, "Synthetic input width")->capture_default_str();
    bench->add_option("--height", o.bench_height, "Synthetic input height")->capture_default_str();
    bench->add_option("--seed", o.seed, "Random seed")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return 2;
    }

    const std::vector<std::pair<CLI::App*, std::function<void(const Options&, RunManifest&)>>> commands{
        {synth, cmd_synth}, {decomp, cmd_decompose}, {recon, cmd_reconstruct}, {tucker, cmd_tucker},
        {trn, cmd_train},   {dhz, cmd_dehaze},       {ev, cmd_eval},           {bench, cmd_bench},
    };

    RunManifest manifest;
    manifest.seed = o.seed;
    int code = 0;
    try {
        if (o.threads > 0) set_thread_count(o.threads);
        for (const auto& [sub, fn] : commands) {
            if (!sub->parsed()) continue;
            manifest.command = sub->get_name();
            record_flags(sub, manifest);
            fn(o, manifest);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        code = 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        code = 1;
    }
    manifest.exit_code = code;
    if (!o.manifest.empty()) {
        try {
            manifest.append_to(o.manifest);
        } catch (const Error& e) {
            std::cerr << "warning: " << e.what() << '\n';
        }
    }
    return code;
}

} // namespace lpdh
