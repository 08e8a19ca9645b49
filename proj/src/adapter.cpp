#include "mytm/adapter.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "mytm/rng.hpp"

namespace mytm {

namespace {

Eigen::MatrixXd he_init(int rows, int cols, Rng& rng) {
    Eigen::MatrixXd m(rows, cols);
    const double s = std::sqrt(2.0 / static_cast<double>(cols));
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = rng.normal() * s;
    return m;
}

Eigen::MatrixXd flatten_rowmajor(const Eigen::MatrixXd& m) {
    Eigen::MatrixXd out(m.rows() * m.cols(), 1);
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            out(i * m.cols() + j, 0) = m(i, j);
    return out;
}

constexpr std::uint32_t kAdapterMagic = 0x4d41444eu; // "NADM"
constexpr std::uint32_t kAdapterVersion = 1;

} // namespace

AdapterNetwork::AdapterNetwork(const AdapterDims& dims, std::uint64_t init_seed)
    : dims_(dims), init_seed_(init_seed) {
    if (dims.global_hidden <= 0 || dims.aging_hidden <= 0 || dims.style_hidden <= 0) {
        throw StructuralError("AdapterNetwork: hidden widths must be positive");
    }
    Rng rng(init_seed);

    global_w1_ = he_init(dims.global_hidden, AdapterDims::kLatentFlat, rng);
    global_b1_ = Eigen::MatrixXd::Zero(dims.global_hidden, 1);
    global_w2_ = he_init(AdapterDims::kGlobalOut, dims.global_hidden, rng);
    global_b2_ = Eigen::MatrixXd::Zero(AdapterDims::kGlobalOut, 1);
    proj_w_ = he_init(AdapterDims::kGlobalFeat, AdapterDims::kGlobalOut, rng);
    proj_b_ = Eigen::MatrixXd::Zero(AdapterDims::kGlobalFeat, 1);

    aging_w1_ = he_init(dims.aging_hidden, 1, rng);
    aging_b1_ = Eigen::MatrixXd::Zero(dims.aging_hidden, 1);
    aging_w2_ = he_init(AdapterDims::kAgeFeat, dims.aging_hidden, rng);
    aging_b2_ = Eigen::MatrixXd::Zero(AdapterDims::kAgeFeat, 1);

    style_w1_.reserve(kLatentRows);
    style_b1_.reserve(kLatentRows);
    style_w2_.reserve(kLatentRows);
    style_b2_.reserve(kLatentRows);
    for (int k = 0; k < kLatentRows; ++k) {
        style_w1_.push_back(he_init(dims.style_hidden, AdapterDims::kStyleIn, rng));
        style_b1_.push_back(Eigen::MatrixXd::Zero(dims.style_hidden, 1));
        // zero-initialized output layer: the adapter starts as the identity
        style_w2_.push_back(Eigen::MatrixXd::Zero(kLatentCols, dims.style_hidden));
        style_b2_.push_back(Eigen::MatrixXd::Zero(kLatentCols, 1));
    }
}

LatentCode AdapterNetwork::forward(const LatentCode& code, AgeYears target_age) const {
    const Eigen::MatrixXd flat = flatten_rowmajor(code.styles());

    const Eigen::MatrixXd hg = (global_w1_ * flat + global_b1_).cwiseMax(0.0);
    const Eigen::MatrixXd g576 = global_w2_ * hg + global_b2_;
    const Eigen::MatrixXd wglob = proj_w_ * g576 + proj_b_;

    Eigen::MatrixXd age_in(1, 1);
    age_in(0, 0) = target_age.normalized();
    const Eigen::MatrixXd ha = (aging_w1_ * age_in + aging_b1_).cwiseMax(0.0);
    const Eigen::MatrixXd afeat = aging_w2_ * ha + aging_b2_;

    Eigen::MatrixXd offset(kLatentRows, kLatentCols);
    Eigen::MatrixXd style_in(AdapterDims::kStyleIn, 1);
    for (int k = 0; k < kLatentRows; ++k) {
        style_in.block(0, 0, kLatentCols, 1) = code.styles().row(k).transpose();
        style_in.block(kLatentCols, 0, AdapterDims::kGlobalFeat, 1) = wglob;
        style_in.block(kLatentCols + AdapterDims::kGlobalFeat, 0, AdapterDims::kAgeFeat, 1) = afeat;
        const Eigen::MatrixXd hk = (style_w1_[k] * style_in + style_b1_[k]).cwiseMax(0.0);
        offset.row(k) = (style_w2_[k] * hk + style_b2_[k]).transpose();
    }
    return LatentCode(std::move(offset));
}

std::vector<std::pair<std::string, Eigen::MatrixXd*>> AdapterNetwork::parameters() {
    std::vector<std::pair<std::string, Eigen::MatrixXd*>> out;
    out.reserve(10 + 4 * kLatentRows);
    out.emplace_back("global_w1", &global_w1_);
    out.emplace_back("global_b1", &global_b1_);
    out.emplace_back("global_w2", &global_w2_);
    out.emplace_back("global_b2", &global_b2_);
    out.emplace_back("proj_w", &proj_w_);
    out.emplace_back("proj_b", &proj_b_);
    out.emplace_back("aging_w1", &aging_w1_);
    out.emplace_back("aging_b1", &aging_b1_);
    out.emplace_back("aging_w2", &aging_w2_);
    out.emplace_back("aging_b2", &aging_b2_);
    for (int k = 0; k < kLatentRows; ++k) {
        const std::string s = "style" + std::to_string(k);
        out.emplace_back(s + "_w1", &style_w1_[k]);
        out.emplace_back(s + "_b1", &style_b1_[k]);
        out.emplace_back(s + "_w2", &style_w2_[k]);
        out.emplace_back(s + "_b2", &style_b2_[k]);
    }
    return out;
}

std::vector<std::pair<std::string, const Eigen::MatrixXd*>> AdapterNetwork::parameters() const {
    auto mut = const_cast<AdapterNetwork*>(this)->parameters();
    std::vector<std::pair<std::string, const Eigen::MatrixXd*>> out;
    out.reserve(mut.size());
    for (auto& [n, p] : mut) out.emplace_back(n, p);
    return out;
}

std::size_t AdapterNetwork::parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, p] : parameters()) n += static_cast<std::size_t>(p->size());
    return n;
}

AdapterNetwork::TapeParams AdapterNetwork::register_on_tape(diff::Tape& tape) const {
    TapeParams tp;
    for (const auto& [name, p] : parameters()) tp.leaves.push_back(tape.leaf(*p));
    return tp;
}

diff::Var AdapterNetwork::forward_on_tape(diff::Tape& tape, const TapeParams& params,
                                          diff::Var code, AgeYears target_age) const {
    // leaves follow parameters() order
    int i = 0;
    const diff::Var gw1 = params.leaves[i++], gb1 = params.leaves[i++];
    const diff::Var gw2 = params.leaves[i++], gb2 = params.leaves[i++];
    const diff::Var pw = params.leaves[i++], pb = params.leaves[i++];
    const diff::Var aw1 = params.leaves[i++], ab1 = params.leaves[i++];
    const diff::Var aw2 = params.leaves[i++], ab2 = params.leaves[i++];

    const diff::Var flat = tape.flatten_rowmajor(code);
    const diff::Var hg = tape.relu(tape.add(tape.matmul(gw1, flat), gb1));
    const diff::Var g576 = tape.add(tape.matmul(gw2, hg), gb2);
    const diff::Var wglob = tape.add(tape.matmul(pw, g576), pb);

    Eigen::MatrixXd age_in(1, 1);
    age_in(0, 0) = target_age.normalized();
    const diff::Var age_c = tape.constant(age_in);
    const diff::Var ha = tape.relu(tape.add(tape.matmul(aw1, age_c), ab1));
    const diff::Var afeat = tape.add(tape.matmul(aw2, ha), ab2);

    std::vector<diff::Var> rows;
    rows.reserve(kLatentRows);
    for (int k = 0; k < kLatentRows; ++k) {
        const diff::Var sw1 = params.leaves[i++], sb1 = params.leaves[i++];
        const diff::Var sw2 = params.leaves[i++], sb2 = params.leaves[i++];
        const diff::Var style_row = tape.row_as_vector(code, k);
        const diff::Var in_k = tape.concat({style_row, wglob, afeat});
        const diff::Var hk = tape.relu(tape.add(tape.matmul(sw1, in_k), sb1));
        rows.push_back(tape.add(tape.matmul(sw2, hk), sb2));
    }
    return tape.unflatten_rowmajor(tape.concat(rows), kLatentRows, kLatentCols);
}

void AdapterNetwork::save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ValidationError("cannot open for write: " + path);
    auto w32 = [&](std::uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); };
    auto w64 = [&](std::uint64_t v) { f.write(reinterpret_cast<const char*>(&v), 8); };
    w32(kAdapterMagic);
    w32(kAdapterVersion);
    w32(static_cast<std::uint32_t>(dims_.global_hidden));
    w32(static_cast<std::uint32_t>(dims_.aging_hidden));
    w32(static_cast<std::uint32_t>(dims_.style_hidden));
    w64(init_seed_);
    for (const auto& [name, p] : parameters()) {
        w64(static_cast<std::uint64_t>(p->rows()));
        w64(static_cast<std::uint64_t>(p->cols()));
        f.write(reinterpret_cast<const char*>(p->data()),
                static_cast<std::streamsize>(sizeof(double) * p->size()));
    }
    if (!f) throw ValidationError("write failed: " + path);
}

AdapterNetwork AdapterNetwork::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ValidationError("cannot open adapter file: " + path);
    auto r32 = [&]() {
        std::uint32_t v = 0;
        f.read(reinterpret_cast<char*>(&v), 4);
        return v;
    };
    auto r64 = [&]() {
        std::uint64_t v = 0;
        f.read(reinterpret_cast<char*>(&v), 8);
        return v;
    };
    if (r32() != kAdapterMagic) throw ValidationError("not an adapter file: " + path);
    if (r32() != kAdapterVersion) throw ValidationError("unsupported adapter version: " + path);
    AdapterDims dims;
    dims.global_hidden = static_cast<int>(r32());
    dims.aging_hidden = static_cast<int>(r32());
    dims.style_hidden = static_cast<int>(r32());
    const std::uint64_t seed = r64();
    if (!f) throw ValidationError("truncated adapter file: " + path);

    AdapterNetwork net(dims, seed);
    for (auto& [name, p] : net.parameters()) {
        const auto rows = static_cast<Eigen::Index>(r64());
        const auto cols = static_cast<Eigen::Index>(r64());
        if (!f || rows != p->rows() || cols != p->cols()) {
            throw ValidationError("adapter tensor '" + name + "' has unexpected shape in " + path);
        }
        f.read(reinterpret_cast<char*>(p->data()),
               static_cast<std::streamsize>(sizeof(double) * p->size()));
        if (!f) throw ValidationError("truncated adapter file: " + path);
    }
    return net;
}

bool AdapterNetwork::equal_parameters(const AdapterNetwork& other) const {
    auto a = parameters();
    auto b = other.parameters();
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].second->rows() != b[i].second->rows() ||
            a[i].second->cols() != b[i].second->cols())
            return false;
        if (std::memcmp(a[i].second->data(), b[i].second->data(),
                        sizeof(double) * static_cast<std::size_t>(a[i].second->size())) != 0)
            return false;
    }
    return true;
}

std::pair<ImageTensor, LatentCode> personalized_reage(const BackendBundle& bundle,
                                                      const AdapterNetwork& net,
                                                      const ImageTensor& image,
                                                      AgeYears target_age) {
    const LatentCode enc = bundle.encoder->encode(image, target_age);
    const LatentCode offset = net.forward(enc, target_age);
    LatentCode combined = latent_add(enc, offset);
    ImageTensor out = bundle.decoder->decode(combined);
    return {std::move(out), std::move(combined)};
}

std::pair<ImageTensor, LatentCode> global_reage(const BackendBundle& bundle,
                                                const ImageTensor& image,
                                                AgeYears target_age) {
    LatentCode enc = bundle.encoder->encode(image, target_age);
    ImageTensor out = bundle.decoder->decode(enc);
    return {std::move(out), std::move(enc)};
}

} // namespace mytm
