// Command-line surface for the segmentation pipeline. Every subcommand reads
// the pipeline config (flags override it), writes its artifacts under a run
// directory with a manifest, and exits 0 on success, 2 on usage errors, 3 on
// config errors.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "diffseg/artifacts.hpp"
#include "diffseg/config.hpp"
#include "diffseg/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace diffseg;

namespace {

struct Common {
    std::string config_path;
    bool seed_set = false;
    uint64_t seed = 0;

    PipelineConfig load() const {
        PipelineConfig cfg =
            config_path.empty() ? PipelineConfig{} : load_config(config_path);
        if (seed_set) cfg.seed = seed;
        cfg.apply_seed();
        validate_pipeline(cfg);
        return cfg;
    }
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config_path, "pipeline config file");
    cmd->add_option("--seed", c.seed, "master seed (overrides config)")
        ->each([&c](const std::string&) { c.seed_set = true; });
}

uint64_t config_hash(const PipelineConfig& cfg) {
    return fnv1a(dump_config(cfg));
}

std::string tstep_name(const char* prefix, int t) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s_t%03d.png", prefix, t);
    return buf;
}

void save_ensemble_artifacts(const EnsembleResult& er, const std::string& out) {
    fs::create_directories(out);
    for (size_t i = 0; i < er.ensemble.masks.size(); ++i) {
        int t = er.ensemble.timesteps[i];
        write_mask_png((fs::path(out) / tstep_name("mask", t)).string(),
                       er.ensemble.masks[i]);
        render_heatmap(er.diffmaps[i].values,
                       (fs::path(out) / tstep_name("diff", t)).string());
    }
}

// Reads mask_t*.png (and diff sidecars when wanted) back from a run dir.
EnsembleResult load_ensemble_artifacts(const std::string& dir,
                                       bool with_diffmaps) {
    EnsembleResult er;
    std::vector<int> ts;
    for (const auto& e : fs::directory_iterator(dir)) {
        std::string name = e.path().filename().string();
        if (name.rfind("mask_t", 0) == 0 && name.size() == 14 &&
            name.substr(10) == ".png")
            ts.push_back(std::stoi(name.substr(6, 3)));
    }
    std::sort(ts.begin(), ts.end());
    if (ts.empty()) throw input_error("no mask_tNNN.png files in " + dir);
    er.ensemble.timesteps = ts;
    for (int t : ts) {
        er.ensemble.masks.push_back(
            read_mask_png((fs::path(dir) / tstep_name("mask", t)).string()));
        if (with_diffmaps) {
            DiffMap d;
            d.timestep = t;
            d.values =
                read_heatmap((fs::path(dir) / tstep_name("diff", t)).string());
            er.diffmaps.push_back(std::move(d));
        }
    }
    return er;
}

json metrics_json(const MetricReport& r) {
    return json{{"dice", r.dice},
                {"jaccard", r.jaccard},
                {"precision", r.precision},
                {"recall", r.recall},
                {"degenerate", r.degenerate}};
}

int run(int argc, char** argv) {
    CLI::App app{"diffusion-difference lesion segmentation pipeline"};
    app.require_subcommand(1);

    // ---- synth ----
    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    Common synth_c;
    add_common(synth, synth_c);
    std::string synth_out;
    int n_train = 200, n_val = 20, n_test = 50;
    synth->add_option("--out", synth_out, "dataset root")->required();
    synth->add_option("--train", n_train, "training sample count");
    synth->add_option("--val", n_val, "validation sample count");
    synth->add_option("--test", n_test, "test sample count");

    // ---- train ----
    auto* train_cmd = app.add_subcommand("train", "train the diffusion model");
    Common train_c;
    add_common(train_cmd, train_c);
    std::string train_data, train_out;
    int epochs_override = -1;
    train_cmd->add_option("--data", train_data, "dataset root")->required();
    train_cmd->add_option("--out", train_out, "run directory")->required();
    train_cmd->add_option("--epochs", epochs_override, "override epoch count");

    // ---- segment ----
    auto* seg = app.add_subcommand("segment",
                                   "single-timestep diff map and mask");
    Common seg_c;
    add_common(seg, seg_c);
    std::string seg_model, seg_image, seg_out, seg_delta;
    int seg_t = 100;
    seg->add_option("--model", seg_model, "model file")->required();
    seg->add_option("--image", seg_image, "input image PNG")->required();
    seg->add_option("--out", seg_out, "run directory")->required();
    seg->add_option("--t", seg_t, "noising timestep");
    seg->add_option("--delta", seg_delta, "threshold (number or 'otsu')");

    // ---- ensemble ----
    auto* ens = app.add_subcommand("ensemble", "multi-timestep mask ensemble");
    Common ens_c;
    add_common(ens, ens_c);
    std::string ens_model, ens_image, ens_out, ens_ts, ens_delta;
    ens->add_option("--model", ens_model, "model file")->required();
    ens->add_option("--image", ens_image, "input image PNG")->required();
    ens->add_option("--out", ens_out, "run directory")->required();
    ens->add_option("--timesteps", ens_ts, "start:stop:step (default 60:150:10)");
    ens->add_option("--delta", ens_delta, "threshold (number or 'otsu')");

    // ---- uncertainty ----
    auto* unc = app.add_subcommand("uncertainty",
                                   "coherence/ambiguity maps and GED");
    Common unc_c;
    add_common(unc, unc_c);
    std::string unc_in, unc_out;
    unc->add_option("--in", unc_in, "ensemble run directory")->required();
    unc->add_option("--out", unc_out, "output directory (default: --in)");

    // ---- refine ----
    auto* ref = app.add_subcommand("refine", "CRF refinement of an ensemble");
    Common ref_c;
    add_common(ref, ref_c);
    std::string ref_in, ref_image, ref_out;
    int ref_iters = -1, ref_subset = -1;
    ref->add_option("--in", ref_in, "ensemble run directory")->required();
    ref->add_option("--image", ref_image, "original image PNG")->required();
    ref->add_option("--out", ref_out, "run directory")->required();
    ref->add_option("--iters", ref_iters, "refinement iterations K");
    ref->add_option("--subset", ref_subset, "subset size m");

    // ---- refine-one ----
    auto* rone = app.add_subcommand("refine-one",
                                    "CRF-refine a single mask PNG");
    Common rone_c;
    add_common(rone, rone_c);
    std::string rone_image, rone_mask, rone_out;
    rone->add_option("--image", rone_image, "image PNG")->required();
    rone->add_option("--mask", rone_mask, "mask PNG (hard or soft)")
        ->required();
    rone->add_option("--out", rone_out, "output mask PNG")->required();

    // ---- eval ----
    auto* ev = app.add_subcommand("eval", "score predictions against a split");
    Common ev_c;
    add_common(ev, ev_c);
    std::string ev_pred, ev_data, ev_split = "test", ev_out;
    ev->add_option("--pred", ev_pred, "directory of <id>.png predictions")
        ->required();
    ev->add_option("--data", ev_data, "dataset root")->required();
    ev->add_option("--split", ev_split, "dataset split (default test)");
    ev->add_option("--out", ev_out, "run directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    auto threshold_override = [](PipelineConfig& cfg, const std::string& v) {
        if (v.empty()) return;
        if (v == "otsu") {
            cfg.threshold.kind = ThresholdKind::otsu;
        } else {
            cfg.threshold.kind = ThresholdKind::fixed;
            cfg.threshold.delta = std::stod(v);
        }
    };

    if (synth->parsed()) {
        PipelineConfig cfg = synth_c.load();
        fs::create_directories(synth_out);
        fs::remove(fs::path(synth_out) / "labels.csv");
        const std::pair<const char*, int> splits[] = {
            {"train", n_train}, {"val", n_val}, {"test", n_test}};
        int offset = 0;
        for (auto [split, count] : splits) {
            if (count <= 0) continue;
            SyntheticSpec spec = cfg.synth;
            spec.seed = detail::splitmix64(cfg.seed ^ (offset + 1));
            save_dataset(synth_out, split, synthesize(spec, count));
            ++offset;
        }
        write_manifest(synth_out, "synth", json{{"config", synth_c.config_path}},
                       cfg.seed, config_hash(cfg),
                       {"train", "val", "test", "labels.csv"});
        return 0;
    }

    if (train_cmd->parsed()) {
        if (!fs::exists(fs::path(train_data) / "labels.csv")) {
            std::fprintf(stderr, "{\"error\":\"data not found\",\"path\":\"%s\"}\n",
                         train_data.c_str());
            return 2;
        }
        PipelineConfig cfg = train_c.load();
        if (epochs_override >= 0) cfg.train.epochs = epochs_override;
        auto samples = load_dataset(train_data, "train");
        auto train_set = build_training_set(samples);
        TrainResult result =
            diffseg::train(train_set, cfg.train, make_augment_fn(cfg.augment));
        fs::create_directories(train_out);
        std::string model_path = (fs::path(train_out) / "model.dseg").string();
        result.model.save(model_path);
        write_loss_curve((fs::path(train_out) / "loss_curve.csv").string(),
                         result.epoch_losses);
        write_manifest(train_out, "train",
                       json{{"data", train_data}, {"config", train_c.config_path}},
                       cfg.seed, config_hash(cfg),
                       {"model.dseg", "loss_curve.csv"});
        return 0;
    }

    auto need_model = [](const std::string& path) {
        if (!fs::exists(path)) {
            std::fprintf(stderr,
                         "{\"error\":\"model not found\",\"path\":\"%s\"}\n",
                         path.c_str());
            return false;
        }
        return true;
    };
    auto need_file = [](const std::string& path, const char* what) {
        if (!fs::exists(path)) {
            std::fprintf(stderr, "{\"error\":\"%s not found\",\"path\":\"%s\"}\n",
                         what, path.c_str());
            return false;
        }
        return true;
    };

    if (seg->parsed()) {
        if (!need_model(seg_model) || !need_file(seg_image, "image")) return 2;
        PipelineConfig cfg = seg_c.load();
        threshold_override(cfg, seg_delta);
        ConditionalModel model = ConditionalModel::load(seg_model);
        NoiseSchedule schedule =
            build_schedule(cfg.train.T, cfg.train.beta_start, cfg.train.beta_end);
        Image img = png_to_image(read_png(seg_image));
        RngStream rng(cfg.seed);
        DiffMap d = noise_difference(model, image_to_tensor(img), seg_t,
                                     schedule, rng);
        if (cfg.diff_smooth_sigma > 0)
            d.values = gaussian_smooth(d.values, cfg.diff_smooth_sigma);
        BinaryMask mask = binarize(d, cfg.threshold);
        fs::create_directories(seg_out);
        write_mask_png((fs::path(seg_out) / "mask.png").string(), mask);
        render_heatmap(d.values, (fs::path(seg_out) / "diff.png").string());
        write_manifest(seg_out, "segment",
                       json{{"model", seg_model}, {"image", seg_image},
                            {"t", seg_t}},
                       cfg.seed, config_hash(cfg), {"mask.png", "diff.png"});
        return 0;
    }

    if (ens->parsed()) {
        if (!need_model(ens_model) || !need_file(ens_image, "image")) return 2;
        PipelineConfig cfg = ens_c.load();
        threshold_override(cfg, ens_delta);
        if (!ens_ts.empty()) cfg.timesteps = parse_timesteps(ens_ts);
        validate_pipeline(cfg);
        ConditionalModel model = ConditionalModel::load(ens_model);
        NoiseSchedule schedule =
            build_schedule(cfg.train.T, cfg.train.beta_start, cfg.train.beta_end);
        Image img = png_to_image(read_png(ens_image));
        RngStream rng(cfg.seed);
        EnsembleResult er =
            generate_ensemble(model, image_to_tensor(img), cfg.timesteps,
                              cfg.threshold, schedule, rng,
                              cfg.diff_smooth_sigma);
        save_ensemble_artifacts(er, ens_out);
        std::vector<std::string> outputs;
        for (int t : cfg.timesteps) outputs.push_back(tstep_name("mask", t));
        write_manifest(ens_out, "ensemble",
                       json{{"model", ens_model}, {"image", ens_image}},
                       cfg.seed, config_hash(cfg), outputs);
        return 0;
    }

    if (unc->parsed()) {
        if (!need_file(unc_in, "ensemble directory")) return 2;
        PipelineConfig cfg = unc_c.load();
        std::string out = unc_out.empty() ? unc_in : unc_out;
        EnsembleResult er = load_ensemble_artifacts(unc_in, false);
        UncertaintyReport r = report(er.ensemble);
        save_uncertainty(r, out);
        write_manifest(out, "uncertainty", json{{"in", unc_in}}, cfg.seed,
                       config_hash(cfg),
                       {"coherence.png", "ambiguity.png", "uncertainty.json"});
        return 0;
    }

    if (ref->parsed()) {
        if (!need_file(ref_in, "ensemble directory") ||
            !need_file(ref_image, "image"))
            return 2;
        PipelineConfig cfg = ref_c.load();
        if (ref_iters > 0) cfg.refine.iterations = ref_iters;
        if (ref_subset > 0) cfg.refine.subset_size = ref_subset;
        cfg.refine.seed = cfg.seed;
        EnsembleResult er = load_ensemble_artifacts(ref_in, true);
        Image img = png_to_image(read_png(ref_image));
        RefineResult rr = refine_ensemble(er.ensemble, img, er.diffmaps,
                                          cfg.crf, cfg.refine);
        fs::create_directories(ref_out);
        write_mask_png((fs::path(ref_out) / "final.png").string(),
                       rr.final_mask);
        std::vector<std::string> outputs = {"final.png"};
        for (size_t k = 0; k < rr.iteration_masks.size(); ++k) {
            std::string name = "iter_" + std::to_string(k + 1) + ".png";
            write_mask_png((fs::path(ref_out) / name).string(),
                           rr.iteration_masks[k]);
            outputs.push_back(name);
        }
        json subsets = json::array();
        for (const auto& s : rr.chosen_subsets) subsets.push_back(s);
        json inputs{{"in", ref_in},
                    {"image", ref_image},
                    {"subsets", subsets},
                    {"binarize_threshold", cfg.refine.binarize_threshold},
                    {"final_threshold", 0.5}};
        write_manifest(ref_out, "refine", inputs, cfg.seed, config_hash(cfg),
                       outputs);
        return 0;
    }

    if (rone->parsed()) {
        if (!need_file(rone_image, "image") || !need_file(rone_mask, "mask"))
            return 2;
        PipelineConfig cfg = rone_c.load();
        Image img = png_to_image(read_png(rone_image));
        PngImage mp = read_png(rone_mask);
        DiffMap d;
        d.values = Map2(mp.height, mp.width);
        for (size_t i = 0; i < d.values.data.size(); ++i)
            d.values.data[i] =
                static_cast<float>(mp.data[i * mp.channels]) / 255.0f;
        UnaryField u = unary_from_diffmap(d, cfg.refine.unary_clamp);
        MarginalField q = cfg.refine.use_fast_crf
                              ? mean_field_fast(u, img, cfg.crf)
                              : mean_field_naive(u, img, cfg.crf);
        write_mask_png(rone_out, argmax_labeling(q));
        return 0;
    }

    if (ev->parsed()) {
        if (!need_file(ev_pred, "prediction directory") ||
            !need_file(fs::path(ev_data) / "labels.csv", "data"))
            return 2;
        PipelineConfig cfg = ev_c.load();
        auto samples = load_dataset(ev_data, ev_split);
        fs::create_directories(ev_out);
        std::ofstream csv(fs::path(ev_out) / "metrics.csv");
        csv << "id,dice,jaccard,precision,recall\n";
        json per_image = json::array();
        double sums[4] = {0, 0, 0, 0};
        int counted = 0;
        for (const auto& s : samples) {
            fs::path pred_path = fs::path(ev_pred) / (s.id + ".png");
            if (!fs::exists(pred_path)) continue;
            BinaryMask pred = read_mask_png(pred_path.string());
            MetricReport r = evaluate(pred, s.mask);
            csv << s.id << "," << r.dice << "," << r.jaccard << ","
                << r.precision << "," << r.recall << "\n";
            json j = metrics_json(r);
            j["id"] = s.id;
            per_image.push_back(j);
            sums[0] += r.dice;
            sums[1] += r.jaccard;
            sums[2] += r.precision;
            sums[3] += r.recall;
            ++counted;
        }
        if (counted == 0) throw input_error("eval: no predictions matched");
        json out{{"per_image", per_image},
                 {"mean",
                  {{"dice", sums[0] / counted},
                   {"jaccard", sums[1] / counted},
                   {"precision", sums[2] / counted},
                   {"recall", sums[3] / counted}}},
                 {"count", counted}};
        std::ofstream js(fs::path(ev_out) / "metrics.json");
        js << out.dump(2) << "\n";
        write_manifest(ev_out, "eval",
                       json{{"pred", ev_pred}, {"data", ev_data},
                            {"split", ev_split}},
                       cfg.seed, config_hash(cfg),
                       {"metrics.json", "metrics.csv"});
        return 0;
    }

    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const config_error& e) {
        std::fprintf(stderr, "{\"error\":\"config\",\"message\":\"%s\"}\n",
                     e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "{\"error\":\"runtime\",\"message\":\"%s\"}\n",
                     e.what());
        return 1;
    }
}
