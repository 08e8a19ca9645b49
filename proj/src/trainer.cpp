#include "mytm/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

#include "mytm/image_io.hpp"

namespace mytm {

using nlohmann::json;

namespace {

constexpr const char* kAdapterFile = "adapter.bin";
constexpr const char* kStateFile = "trainer_state.bin";
constexpr const char* kMetaFile = "meta.json";

std::string fnv1a64_hex_of_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ValidationError("cannot open for hashing: " + path.string());
    std::uint64_t h = 1469598103934665603ull;
    char buf[4096];
    while (f) {
        f.read(buf, sizeof(buf));
        const std::streamsize got = f.gcount();
        for (std::streamsize i = 0; i < got; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ull;
        }
    }
    char out[17];
    std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
    return out;
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_matrix(std::ostream& os, const Eigen::MatrixXd& m) {
    const std::uint64_t rows = static_cast<std::uint64_t>(m.rows());
    const std::uint64_t cols = static_cast<std::uint64_t>(m.cols());
    os.write(reinterpret_cast<const char*>(&rows), 8);
    os.write(reinterpret_cast<const char*>(&cols), 8);
    os.write(reinterpret_cast<const char*>(m.data()),
             static_cast<std::streamsize>(sizeof(double) * m.size()));
}

Eigen::MatrixXd read_matrix(std::istream& is) {
    std::uint64_t rows = 0, cols = 0;
    is.read(reinterpret_cast<char*>(&rows), 8);
    is.read(reinterpret_cast<char*>(&cols), 8);
    if (!is || rows > 1u << 20 || cols > 1u << 20) {
        throw ValidationError("corrupt matrix header in trainer state");
    }
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    is.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(sizeof(double) * m.size()));
    if (!is) throw ValidationError("truncated matrix in trainer state");
    return m;
}

/// 1 - cosine between identity feature vectors, on the tape.
diff::Var identity_term(diff::Tape& tape, diff::Var feats_a, diff::Var feats_b) {
    return tape.add_scalar(tape.scale(tape.cosine(feats_a, feats_b), -1.0), 1.0);
}

} // namespace

void TrainingConfig::validate() const {
    if (iterations <= 0) throw ValidationError("iterations must be > 0");
    if (!(learning_rate > 0.0)) throw ValidationError("learning_rate must be > 0");
    if (!(p_extrapolate >= 0.0 && p_extrapolate <= 1.0))
        throw ValidationError("p_extrapolate must be in [0, 1]");
    if (checkpoint_every <= 0) throw ValidationError("checkpoint_every must be > 0");
    if (optimizer != "adam") throw ValidationError("unknown optimizer '" + optimizer + "'");
    weights.validate();
}

void AdamOptimizer::ensure_initialized(
    const std::vector<std::pair<std::string, Eigen::MatrixXd*>>& params) {
    if (!m_.empty()) return;
    for (const auto& [name, p] : params) {
        m_.push_back(Eigen::MatrixXd::Zero(p->rows(), p->cols()));
        v_.push_back(Eigen::MatrixXd::Zero(p->rows(), p->cols()));
    }
}

void AdamOptimizer::step(std::vector<std::pair<std::string, Eigen::MatrixXd*>>& params,
                         const std::vector<Eigen::MatrixXd>& grads, const TrainingConfig& cfg) {
    ensure_initialized(params);
    if (grads.size() != params.size() || m_.size() != params.size()) {
        throw StructuralError("AdamOptimizer: parameter/gradient count mismatch");
    }
    ++t_;
    const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i] = b1 * m_[i] + (1.0 - b1) * grads[i];
        v_[i] = b2 * v_[i] + (1.0 - b2) * grads[i].cwiseProduct(grads[i]);
        const Eigen::MatrixXd mhat = m_[i] / bc1;
        const Eigen::MatrixXd vhat = v_[i] / bc2;
        *params[i].second -=
            cfg.learning_rate *
            (mhat.array() / (vhat.array().sqrt() + cfg.adam_eps)).matrix();
    }
}

void AdamOptimizer::save(std::ostream& os) const {
    const std::uint64_t t = static_cast<std::uint64_t>(t_);
    const std::uint64_t n = m_.size();
    os.write(reinterpret_cast<const char*>(&t), 8);
    os.write(reinterpret_cast<const char*>(&n), 8);
    for (std::size_t i = 0; i < m_.size(); ++i) {
        write_matrix(os, m_[i]);
        write_matrix(os, v_[i]);
    }
}

void AdamOptimizer::load(std::istream& is) {
    std::uint64_t t = 0, n = 0;
    is.read(reinterpret_cast<char*>(&t), 8);
    is.read(reinterpret_cast<char*>(&n), 8);
    if (!is) throw ValidationError("corrupt optimizer state");
    t_ = static_cast<long>(t);
    m_.clear();
    v_.clear();
    for (std::uint64_t i = 0; i < n; ++i) {
        m_.push_back(read_matrix(is));
        v_.push_back(read_matrix(is));
    }
}

const ImageTensor& ImageCache::get(const std::filesystem::path& path,
                                   const BackendBundle& bundle) {
    const std::string key = path.string();
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    ImageTensor img = bundle.aligner->align_face(load_image(path));
    return cache_.emplace(key, std::move(img)).first->second;
}

TapeStepLoss tape_total_personalization_loss(diff::Tape& tape, const BackendBundle& bundle,
                                             const AdapterNetwork& net,
                                             const AdapterNetwork::TapeParams& params,
                                             const ImageTensor& x, const StepContext& ctx,
                                             const LossWeights& w, const AblationFlags& flags) {
    if (!flags.use_adapter) {
        throw StructuralError("tape_total_personalization_loss requires an active adapter; "
                              "use the plain total_personalization_loss when it is ablated");
    }
    const Backend& enc_backend = *bundle.encoder;
    const Backend& dec_backend = *bundle.decoder;
    const Backend& id_backend = *bundle.identity_embedder;
    const Backend& age_backend = *bundle.age_estimator_train;
    const Backend& lpips_backend = *bundle.perceptual_metric;

    TapeStepLoss out;
    std::vector<diff::Var> contributions;

    const diff::Var x_const = tape.constant(x.pixels());
    const diff::Var x_feats = lpips_backend.perceptual_features_on_tape(tape, x_const);
    const diff::Var x_id = id_backend.identity_features_on_tape(tape, x_const);

    // composite forward/cycle terms against the input photo
    auto add_composite = [&](const std::string& prefix, diff::Var y, AgeYears age_target) {
        const diff::Var l2 = tape.mse(y, x_const);
        const diff::Var lp = tape.mse(lpips_backend.perceptual_features_on_tape(tape, y), x_feats);
        const diff::Var id = identity_term(tape, id_backend.identity_features_on_tape(tape, y), x_id);
        const diff::Var est = age_backend.estimate_age_on_tape(tape, y);
        const diff::Var age =
            tape.abs(tape.add_scalar(tape.scale(est, -1.0), age_target.value()));
        out.report.add(prefix + "l2", tape.scalar(l2), w.lambda_l2);
        out.report.add(prefix + "lpips", tape.scalar(lp), w.lambda_lpips);
        out.report.add(prefix + "id", tape.scalar(id), w.lambda_id);
        out.report.add(prefix + "age", tape.scalar(age), w.lambda_age);
        contributions.push_back(tape.scale(l2, w.lambda_l2));
        contributions.push_back(tape.scale(lp, w.lambda_lpips));
        contributions.push_back(tape.scale(id, w.lambda_id));
        contributions.push_back(tape.scale(age, w.lambda_age));
    };

    // forward pass
    const LatentCode enc = enc_backend.encode(x, ctx.target_age);
    const diff::Var enc_const = tape.constant(enc.styles());
    const diff::Var offset = net.forward_on_tape(tape, params, enc_const, ctx.target_age);
    const diff::Var combined = tape.add(enc_const, offset);
    const diff::Var y_p = dec_backend.decode_on_tape(tape, combined);
    add_composite("forward_", y_p, ctx.target_age);

    // cycle pass: gradients flow through the re-encode of the first output
    const diff::Var enc2 = enc_backend.encode_on_tape(tape, y_p, ctx.input_age);
    const diff::Var offset2 = net.forward_on_tape(tape, params, enc2, ctx.input_age);
    const diff::Var combined2 = tape.add(enc2, offset2);
    const diff::Var y_cycle = dec_backend.decode_on_tape(tape, combined2);
    add_composite("cycle_", y_cycle, ctx.input_age);

    // personalized aging loss
    if (flags.use_personalized_aging_loss && !ctx.reference_images.empty()) {
        const diff::Var y_id = id_backend.identity_features_on_tape(tape, y_p);
        std::vector<diff::Var> cosines;
        cosines.reserve(ctx.reference_images.size());
        for (const auto& ref : ctx.reference_images) {
            const IdentityEmbedding e = id_backend.embed_identity(ref);
            cosines.push_back(tape.cosine(y_id, tape.constant(e.vector())));
        }
        const diff::Var pers =
            tape.add_scalar(tape.scale(tape.max_of(cosines), -1.0), 1.0);
        out.report.add("pers_age", tape.scalar(pers), w.lambda_pers_age);
        contributions.push_back(tape.scale(pers, w.lambda_pers_age));
    } else {
        out.report.add_skipped("pers_age", w.lambda_pers_age);
    }

    // extrapolation replay branch
    if (flags.use_extrapolation_reg && ctx.extrapolation_age.has_value()) {
        const AgeYears a_ext = *ctx.extrapolation_age;
        const LatentCode enc_e = enc_backend.encode(x, a_ext);
        const ImageTensor y_g = dec_backend.decode(enc_e);
        const diff::Var enc_e_const = tape.constant(enc_e.styles());
        const diff::Var off_e = net.forward_on_tape(tape, params, enc_e_const, a_ext);
        const diff::Var y_pe = dec_backend.decode_on_tape(tape, tape.add(enc_e_const, off_e));
        const diff::Var g_const = tape.constant(y_g.pixels());
        const diff::Var l2 = tape.mse(y_pe, g_const);
        const diff::Var lp = tape.mse(lpips_backend.perceptual_features_on_tape(tape, y_pe),
                                      lpips_backend.perceptual_features_on_tape(tape, g_const));
        const diff::Var id = identity_term(
            tape, id_backend.identity_features_on_tape(tape, y_pe),
            id_backend.identity_features_on_tape(tape, g_const));
        diff::Var reg = tape.add(tape.add(tape.scale(l2, w.lambda_l2),
                                          tape.scale(lp, w.lambda_lpips)),
                                 tape.scale(id, w.lambda_id));
        out.report.add("reg_extra", tape.scalar(reg), w.lambda_reg_extra);
        contributions.push_back(tape.scale(reg, w.lambda_reg_extra));
    } else {
        out.report.add_skipped("reg_extra", w.lambda_reg_extra);
    }

    // adaptive w-norm on the decoded combined latent
    if (flags.use_adaptive_wnorm) {
        const double sched =
            adaptive_reg_weight(std::abs(ctx.input_age.value() - ctx.target_age.value()));
        const diff::Var dist = tape.frobenius_norm(
            tape.sub(combined, tape.constant(bundle.mean_latent.center())));
        out.report.add("wnorm", tape.scalar(dist), w.lambda_reg * sched);
        contributions.push_back(tape.scale(dist, w.lambda_reg * sched));
    } else {
        out.report.add_skipped("wnorm");
    }

    diff::Var total = contributions.front();
    for (std::size_t i = 1; i < contributions.size(); ++i)
        total = tape.add(total, contributions[i]);
    out.total = total;
    return out;
}

Trainer::Trainer(BackendBundle bundle, AgedPhotoCollection collection, TrainingConfig config)
    : bundle_(std::move(bundle)), collection_(std::move(collection)),
      config_(std::move(config)),
      adapter_(config_.adapter_dims, config_.seed),
      rng_(config_.seed) {
    config_.validate();
    if (collection_.split_size(Split::train) == 0) {
        throw ValidationError("trainer requires a nonempty train split");
    }
}

StepContext Trainer::make_context(const PhotoRecord& rec, AgeYears target_age,
                                  std::optional<AgeYears> extrapolation_age) {
    StepContext ctx;
    ctx.input_age = rec.age_years;
    ctx.target_age = target_age;
    ctx.extrapolation_age = extrapolation_age;
    const ReferenceSet refs = build_reference_set(
        collection_, target_age, config_.reference_window_years, Split::train);
    for (const auto* r : refs.records) {
        ctx.reference_images.push_back(images_.get(r->path, bundle_));
    }
    return ctx;
}

LossReport Trainer::step() {
    const std::string rng_snapshot = rng_.save_state();
    try {
        const auto train_records = collection_.split_records(Split::train);
        const std::size_t idx = rng_.index(train_records.size());
        const AgeYears a_tgt = sample_target_age(collection_, rng_);
        std::optional<AgeYears> a_ext;
        if (config_.flags.use_extrapolation_reg && rng_.bernoulli(config_.p_extrapolate)) {
            a_ext = sample_extrapolation_age(collection_, rng_);
        }
        const PhotoRecord& rec = *train_records[idx];
        const ImageTensor& x = images_.get(rec.path, bundle_);
        const StepContext ctx = make_context(rec, a_tgt, a_ext);

        if (!config_.flags.use_adapter) {
            // adapter frozen: log the losses of the global path, no update
            LossReport report = total_personalization_loss(bundle_, adapter_, x, ctx,
                                                           config_.weights, config_.flags);
            ++iteration_;
            return report;
        }

        diff::Tape tape;
        const AdapterNetwork::TapeParams tp = adapter_.register_on_tape(tape);
        TapeStepLoss step_loss = tape_total_personalization_loss(
            tape, bundle_, adapter_, tp, x, ctx, config_.weights, config_.flags);
        tape.backward(step_loss.total);

        auto params = adapter_.parameters();
        std::vector<Eigen::MatrixXd> grads;
        grads.reserve(params.size());
        for (std::size_t i = 0; i < params.size(); ++i)
            grads.push_back(tape.grad(tp.leaves[i]));
        optimizer_.step(params, grads, config_);

        ++iteration_;
        return step_loss.report;
    } catch (...) {
        rng_.restore_state(rng_snapshot);
        throw;
    }
}

std::filesystem::path Trainer::train(const std::filesystem::path& out_dir,
                                     std::optional<long> stop_after) {
    std::filesystem::create_directories(out_dir);
    const auto csv_path = out_dir / "losses.csv";
    const bool fresh = !std::filesystem::exists(csv_path) ||
                       std::filesystem::file_size(csv_path) == 0;
    std::ofstream csv(csv_path, std::ios::binary | std::ios::app);
    if (!csv) throw ValidationError("cannot open loss log: " + csv_path.string());
    if (fresh) {
        csv << "# config_hash=" << config_.config_hash << " seed=" << config_.seed
            << " backend=" << config_.backend_name << "\n";
        csv << "iteration,term,raw,weight,contribution\n";
    }

    const long stop = stop_after ? std::min<long>(*stop_after, config_.iterations)
                                 : config_.iterations;
    std::filesystem::path last_ckpt;
    while (iteration_ < stop) {
        const LossReport report = step();
        for (const auto& t : report.terms) {
            csv << iteration_ << ',' << t.name << ','
                << (t.skipped ? "skipped" : format_double(t.raw)) << ','
                << format_double(t.weight) << ',' << format_double(t.contribution) << "\n";
        }
        csv << iteration_ << ",total," << format_double(report.total) << ",1,"
            << format_double(report.total) << "\n";
        if (iteration_ % config_.checkpoint_every == 0 || iteration_ == config_.iterations) {
            last_ckpt = out_dir / ("ckpt_" + std::to_string(iteration_));
            save_checkpoint(last_ckpt);
        }
    }
    csv.flush();
    return last_ckpt;
}

void Trainer::save_checkpoint(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    adapter_.save((dir / kAdapterFile).string());
    {
        std::ofstream st(dir / kStateFile, std::ios::binary);
        if (!st) throw ValidationError("cannot write trainer state: " + dir.string());
        const std::uint64_t iter = static_cast<std::uint64_t>(iteration_);
        st.write(reinterpret_cast<const char*>(&iter), 8);
        optimizer_.save(st);
        const std::string rng_state = rng_.save_state();
        const std::uint64_t len = rng_state.size();
        st.write(reinterpret_cast<const char*>(&len), 8);
        st.write(rng_state.data(), static_cast<std::streamsize>(len));
    }
    json meta;
    meta["age_min"] = collection_.age_min().value();
    meta["age_max"] = collection_.age_max().value();
    meta["iteration"] = iteration_;
    meta["config_hash"] = config_.config_hash;
    meta["backend_name"] = config_.backend_name;
    meta["seed"] = config_.seed;
    meta["files"] = {
        {kAdapterFile, fnv1a64_hex_of_file(dir / kAdapterFile)},
        {kStateFile, fnv1a64_hex_of_file(dir / kStateFile)},
    };
    std::ofstream mf(dir / kMetaFile, std::ios::binary);
    mf << meta.dump(2) << "\n";
}

namespace {

json load_and_verify_meta(const std::filesystem::path& dir) {
    std::ifstream mf(dir / kMetaFile);
    if (!mf) throw ValidationError("checkpoint metadata missing: " + (dir / kMetaFile).string());
    json meta;
    try {
        mf >> meta;
    } catch (const json::exception& e) {
        throw ValidationError("corrupt checkpoint metadata: " + std::string(e.what()));
    }
    if (meta.contains("files")) {
        for (const auto& [fname, expected] : meta["files"].items()) {
            const std::string actual = fnv1a64_hex_of_file(dir / fname);
            if (actual != expected.get<std::string>()) {
                throw ValidationError("checkpoint hash mismatch for '" + fname +
                                      "' in " + dir.string() +
                                      " (file corrupt or truncated)");
            }
        }
    }
    return meta;
}

} // namespace

void Trainer::restore_checkpoint(const std::filesystem::path& dir) {
    const json meta = load_and_verify_meta(dir);
    adapter_ = AdapterNetwork::load((dir / kAdapterFile).string());
    std::ifstream st(dir / kStateFile, std::ios::binary);
    if (!st) throw ValidationError("trainer state missing in checkpoint: " + dir.string());
    std::uint64_t iter = 0;
    st.read(reinterpret_cast<char*>(&iter), 8);
    iteration_ = static_cast<long>(iter);
    optimizer_.load(st);
    std::uint64_t len = 0;
    st.read(reinterpret_cast<char*>(&len), 8);
    if (!st || len > (1u << 20)) throw ValidationError("corrupt rng state in checkpoint");
    std::string rng_state(len, '\0');
    st.read(rng_state.data(), static_cast<std::streamsize>(len));
    if (!st) throw ValidationError("truncated rng state in checkpoint");
    rng_.restore_state(rng_state);
}

AdapterNetwork load_checkpoint_adapter(const std::filesystem::path& dir) {
    load_and_verify_meta(dir);
    return AdapterNetwork::load((dir / kAdapterFile).string());
}

CheckpointMeta read_checkpoint_meta(const std::filesystem::path& dir) {
    const json meta = load_and_verify_meta(dir);
    CheckpointMeta out;
    out.age_min = meta.value("age_min", 0.0);
    out.age_max = meta.value("age_max", 0.0);
    out.iteration = meta.value("iteration", 0L);
    out.config_hash = meta.value("config_hash", "");
    out.backend_name = meta.value("backend_name", "");
    out.seed = meta.value("seed", std::uint64_t{0});
    return out;
}

} // namespace mytm
