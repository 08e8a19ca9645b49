#include "mytm/tape.hpp"

#include <cmath>

namespace mytm::diff {

namespace {

void check_same_shape(const Mat& a, const Mat& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw StructuralError(std::string(op) + ": shape mismatch " +
                              std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                              " vs " + std::to_string(b.rows()) + "x" +
                              std::to_string(b.cols()));
    }
}

} // namespace

Var Tape::push(Mat value, bool needs_grad, std::function<void(Tape&)> pullback) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    if (needs_grad) {
        n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    }
    n.pullback = std::move(pullback);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::leaf(const Mat& value) { return push(value, true, nullptr); }

Var Tape::constant(const Mat& value) { return push(value, false, nullptr); }

Var Tape::constant_scalar(double v) {
    Mat m(1, 1);
    m(0, 0) = v;
    return constant(m);
}

Var Tape::matmul(Var a, Var b) {
    const Mat& av = value(a);
    const Mat& bv = value(b);
    if (av.cols() != bv.rows()) {
        throw StructuralError("matmul: inner dimensions differ");
    }
    Mat out = av * bv;
    Var r = push(std::move(out), needs(a) || needs(b), nullptr);
    nodes_[r.id].pullback = [a, b, r](Tape& t) {
        const Mat& g = t.grad(r);
        if (t.needs(a)) t.grad_ref(a).noalias() += g * t.value(b).transpose();
        if (t.needs(b)) t.grad_ref(b).noalias() += t.value(a).transpose() * g;
    };
    return r;
}

Var Tape::add(Var a, Var b) {
    check_same_shape(value(a), value(b), "add");
    Var r = push(value(a) + value(b), needs(a) || needs(b), nullptr);
    nodes_[r.id].pullback = [a, b, r](Tape& t) {
        if (t.needs(a)) t.grad_ref(a) += t.grad(r);
        if (t.needs(b)) t.grad_ref(b) += t.grad(r);
    };
    return r;
}

Var Tape::sub(Var a, Var b) {
    check_same_shape(value(a), value(b), "sub");
    Var r = push(value(a) - value(b), needs(a) || needs(b), nullptr);
    nodes_[r.id].pullback = [a, b, r](Tape& t) {
        if (t.needs(a)) t.grad_ref(a) += t.grad(r);
        if (t.needs(b)) t.grad_ref(b) -= t.grad(r);
    };
    return r;
}

Var Tape::scale(Var a, double s) {
    Var r = push(value(a) * s, needs(a), nullptr);
    nodes_[r.id].pullback = [a, s, r](Tape& t) {
        if (t.needs(a)) t.grad_ref(a) += t.grad(r) * s;
    };
    return r;
}

Var Tape::add_scalar(Var a, double s) {
    Var r = push(value(a).array() + s, needs(a), nullptr);
    nodes_[r.id].pullback = [a, r](Tape& t) {
        if (t.needs(a)) t.grad_ref(a) += t.grad(r);
    };
    return r;
}

Var Tape::cwise_mul(Var a, Var b) {
    check_same_shape(value(a), value(b), "cwise_mul");
    Var r = push(value(a).cwiseProduct(value(b)), needs(a) || needs(b), nullptr);
    nodes_[r.id].pullback = [a, b, r](Tape& t) {
        if (t.needs(a)) t.grad_ref(a) += t.grad(r).cwiseProduct(t.value(b));
        if (t.needs(b)) t.grad_ref(b) += t.grad(r).cwiseProduct(t.value(a));
    };
    return r;
}

Var Tape::relu(Var a) {
    Var r = push(value(a).cwiseMax(0.0), needs(a), nullptr);
    nodes_[r.id].pullback = [a, r](Tape& t) {
        if (!t.needs(a)) return;
        const Mat& av = t.value(a);
        const Mat& g = t.grad(r);
        Mat& ga = t.grad_ref(a);
        for (Eigen::Index j = 0; j < av.cols(); ++j)
            for (Eigen::Index i = 0; i < av.rows(); ++i)
                if (av(i, j) > 0.0) ga(i, j) += g(i, j);
    };
    return r;
}

Var Tape::tanh(Var a) {
    Var r = push(value(a).array().tanh(), needs(a), nullptr);
    nodes_[r.id].pullback = [a, r](Tape& t) {
        if (!t.needs(a)) return;
        const Mat& y = t.value(r);
        t.grad_ref(a).array() +=
            t.grad(r).array() * (1.0 - y.array() * y.array());
    };
    return r;
}

Var Tape::atanh_clamped(Var a, double eps) {
    const double lim = 1.0 - eps;
    const Mat& av = value(a);
    Mat out(av.rows(), av.cols());
    for (Eigen::Index j = 0; j < av.cols(); ++j) {
        for (Eigen::Index i = 0; i < av.rows(); ++i) {
            double x = av(i, j);
            if (x > lim) x = lim;
            if (x < -lim) x = -lim;
            out(i, j) = std::atanh(x);
        }
    }
    Var r = push(std::move(out), needs(a), nullptr);
    nodes_[r.id].pullback = [a, r, lim](Tape& t) {
        if (!t.needs(a)) return;
        const Mat& av2 = t.value(a);
        const Mat& g = t.grad(r);
        Mat& ga = t.grad_ref(a);
        for (Eigen::Index j = 0; j < av2.cols(); ++j) {
            for (Eigen::Index i = 0; i < av2.rows(); ++i) {
                const double x = av2(i, j);
                if (x > -lim && x < lim) {
                    ga(i, j) += g(i, j) / (1.0 - x * x);
                }
            }
        }
    };
    return r;
}

Var Tape::abs(Var a) {
    Var r = push(value(a).cwiseAbs(), needs(a), nullptr);
    nodes_[r.id].pullback = [a, r](Tape& t) {
        if (!t.needs(a)) return;
        const Mat& av = t.value(a);
        const Mat& g = t.grad(r);
        Mat& ga = t.grad_ref(a);
        for (Eigen::Index j = 0; j < av.cols(); ++j)
            for (Eigen::Index i = 0; i < av.rows(); ++i) {
                if (av(i, j) > 0.0) ga(i, j) += g(i, j);
                else if (av(i, j) < 0.0) ga(i, j) -= g(i, j);
            }
    };
    return r;
}

Var Tape::flatten_rowmajor(Var a) {
    const Mat& av = value(a);
    const Eigen::Index rows = av.rows(), cols = av.cols();
    Mat out(rows * cols, 1);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j)
            out(i * cols + j, 0) = av(i, j);
    Var r = push(std::move(out), needs(a), nullptr);
    nodes_[r.id].pullback = [a, r, rows, cols](Tape& t) {
        if (!t.needs(a)) return;
        const Mat& g = t.grad(r);
        Mat& ga = t.grad_ref(a);
        for (Eigen::Index i = 0; i < rows; ++i)
            for (Eigen::Index j = 0; j < cols; ++j)
                ga(i, j) += g(i * cols + j, 0);
    };
    return r;
}

Var Tape::unflatten_rowmajor(Var a, int rows, int cols) {
    const Mat& av = value(a);
    if (av.size() != static_cast<Eigen::Index>(rows) * cols || av.cols() != 1) {
        throw StructuralError("unflatten_rowmajor: size mismatch");
    }
    Mat out(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j)
            out(i, j) = av(static_cast<Eigen::Index>(i) * cols + j, 0);
    Var r = push(std::move(out), needs(a), nullptr);
    nodes_[r.id].pullback = [a, r, rows, cols](Tape& t) {
        if (!t.needs(a)) return;
        const Mat& g = t.grad(r);
        Mat& ga = t.grad_ref(a);
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j)
                ga(static_cast<Eigen::Index>(i) * cols + j, 0) += g(i, j);
    };
    return r;
}

Var Tape::row_as_vector(Var a, int rrow) {
    const Mat& av = value(a);
    if (rrow < 0 || rrow >= av.rows()) {
        throw StructuralError("row_as_vector: row out of range");
    }
    Mat out = av.row(rrow).transpose();
    Var r = push(std::move(out), needs(a), nullptr);
    nodes_[r.id].pullback = [a, r, rrow](Tape& t) {
        if (t.needs(a)) t.grad_ref(a).row(rrow) += t.grad(r).transpose();
    };
    return r;
}

Var Tape::concat(const std::vector<Var>& parts) {
    Eigen::Index total = 0;
    bool ng = false;
    for (Var p : parts) {
        if (value(p).cols() != 1) {
            throw StructuralError("concat: expects column vectors");
        }
        total += value(p).rows();
        ng = ng || needs(p);
    }
    Mat out(total, 1);
    Eigen::Index off = 0;
    for (Var p : parts) {
        out.block(off, 0, value(p).rows(), 1) = value(p);
        off += value(p).rows();
    }
    Var r = push(std::move(out), ng, nullptr);
    std::vector<Var> parts_copy = parts;
    nodes_[r.id].pullback = [parts_copy, r](Tape& t) {
        Eigen::Index o = 0;
        for (Var p : parts_copy) {
            const Eigen::Index n = t.value(p).rows();
            if (t.needs(p)) t.grad_ref(p) += t.grad(r).block(o, 0, n, 1);
            o += n;
        }
    };
    return r;
}

Var Tape::gather(Var v, const std::vector<int>& idx) {
    const Mat& vv = value(v);
    if (vv.cols() != 1) {
        throw StructuralError("gather: expects a column vector");
    }
    Mat out(static_cast<Eigen::Index>(idx.size()), 1);
    for (std::size_t i = 0; i < idx.size(); ++i) out(static_cast<Eigen::Index>(i), 0) = vv(idx[i], 0);
    Var r = push(std::move(out), needs(v), nullptr);
    std::vector<int> idx_copy = idx;
    nodes_[r.id].pullback = [v, r, idx_copy](Tape& t) {
        if (!t.needs(v)) return;
        Mat& gv = t.grad_ref(v);
        const Mat& g = t.grad(r);
        for (std::size_t i = 0; i < idx_copy.size(); ++i)
            gv(idx_copy[i], 0) += g(static_cast<Eigen::Index>(i), 0);
    };
    return r;
}

Var Tape::segment(Var v, int start, int len) {
    const Mat& vv = value(v);
    if (vv.cols() != 1 || start < 0 || len < 0 || start + len > vv.rows()) {
        throw StructuralError("segment: range out of bounds");
    }
    Mat out = vv.block(start, 0, len, 1);
    Var r = push(std::move(out), needs(v), nullptr);
    nodes_[r.id].pullback = [v, r, start, len](Tape& t) {
        if (t.needs(v)) t.grad_ref(v).block(start, 0, len, 1) += t.grad(r);
    };
    return r;
}

Var Tape::conv_features(Var image_chw, const ConvSpec& spec) {
    const Mat& img = value(image_chw);
    if (img.cols() != 1 ||
        img.rows() != static_cast<Eigen::Index>(spec.in_channels) * spec.height * spec.width) {
        throw StructuralError("conv_features: image size does not match spec");
    }
    const int oh = spec.out_h(), ow = spec.out_w();
    auto pix = [&](const Mat& m, int c, int y, int x) -> double {
        return m((static_cast<Eigen::Index>(c) * spec.height + y) * spec.width + x, 0);
    };
    Mat out(static_cast<Eigen::Index>(spec.feature_count()), 1);
    for (int oc = 0; oc < spec.out_channels; ++oc) {
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                double acc = 0.0;
                for (int ic = 0; ic < spec.in_channels; ++ic)
                    for (int ky = 0; ky < spec.ksize; ++ky)
                        for (int kx = 0; kx < spec.ksize; ++kx)
                            acc += spec.kernel(oc, ic, ky, kx) *
                                   pix(img, ic, oy * spec.stride + ky, ox * spec.stride + kx);
                out((static_cast<Eigen::Index>(oc) * oh + oy) * ow + ox, 0) = acc;
            }
        }
    }
    Var r = push(std::move(out), needs(image_chw), nullptr);
    ConvSpec spec_copy = spec;
    nodes_[r.id].pullback = [image_chw, r, spec_copy](Tape& t) {
        if (!t.needs(image_chw)) return;
        const Mat& g = t.grad(r);
        Mat& gi = t.grad_ref(image_chw);
        const int oh2 = spec_copy.out_h(), ow2 = spec_copy.out_w();
        for (int oc = 0; oc < spec_copy.out_channels; ++oc) {
            for (int oy = 0; oy < oh2; ++oy) {
                for (int ox = 0; ox < ow2; ++ox) {
                    const double gf = g((static_cast<Eigen::Index>(oc) * oh2 + oy) * ow2 + ox, 0);
                    if (gf == 0.0) continue;
                    for (int ic = 0; ic < spec_copy.in_channels; ++ic)
                        for (int ky = 0; ky < spec_copy.ksize; ++ky)
                            for (int kx = 0; kx < spec_copy.ksize; ++kx) {
                                const Eigen::Index pi =
                                    (static_cast<Eigen::Index>(ic) * spec_copy.height +
                                     oy * spec_copy.stride + ky) * spec_copy.width +
                                    ox * spec_copy.stride + kx;
                                gi(pi, 0) += gf * spec_copy.kernel(oc, ic, ky, kx);
                            }
                }
            }
        }
    };
    return r;
}

Var Tape::sum(Var a) {
    Mat out(1, 1);
    out(0, 0) = value(a).sum();
    Var r = push(std::move(out), needs(a), nullptr);
    nodes_[r.id].pullback = [a, r](Tape& t) {
        if (t.needs(a)) t.grad_ref(a).array() += t.grad(r)(0, 0);
    };
    return r;
}

Var Tape::mean(Var a) {
    const double n = static_cast<double>(value(a).size());
    Mat out(1, 1);
    out(0, 0) = value(a).sum() / n;
    Var r = push(std::move(out), needs(a), nullptr);
    nodes_[r.id].pullback = [a, r, n](Tape& t) {
        if (t.needs(a)) t.grad_ref(a).array() += t.grad(r)(0, 0) / n;
    };
    return r;
}

Var Tape::mse(Var a, Var b) {
    check_same_shape(value(a), value(b), "mse");
    const double n = static_cast<double>(value(a).size());
    Mat diff = value(a) - value(b);
    Mat out(1, 1);
    out(0, 0) = diff.squaredNorm() / n;
    Var r = push(std::move(out), needs(a) || needs(b), nullptr);
    nodes_[r.id].pullback = [a, b, r, n](Tape& t) {
        const double g = t.grad(r)(0, 0);
        Mat d = (t.value(a) - t.value(b)) * (2.0 * g / n);
        if (t.needs(a)) t.grad_ref(a) += d;
        if (t.needs(b)) t.grad_ref(b) -= d;
    };
    return r;
}

Var Tape::dot(Var a, Var b) {
    check_same_shape(value(a), value(b), "dot");
    Mat out(1, 1);
    out(0, 0) = value(a).cwiseProduct(value(b)).sum();
    Var r = push(std::move(out), needs(a) || needs(b), nullptr);
    nodes_[r.id].pullback = [a, b, r](Tape& t) {
        const double g = t.grad(r)(0, 0);
        if (t.needs(a)) t.grad_ref(a) += g * t.value(b);
        if (t.needs(b)) t.grad_ref(b) += g * t.value(a);
    };
    return r;
}

Var Tape::frobenius_norm(Var a) {
    const double nrm = value(a).norm();
    Mat out(1, 1);
    out(0, 0) = nrm;
    Var r = push(std::move(out), needs(a), nullptr);
    nodes_[r.id].pullback = [a, r, nrm](Tape& t) {
        if (!t.needs(a)) return;
        const double denom = nrm > 1e-12 ? nrm : 1e-12;
        t.grad_ref(a) += (t.grad(r)(0, 0) / denom) * t.value(a);
    };
    return r;
}

Var Tape::cosine(Var a, Var b) {
    const double na = value(a).norm();
    const double nb = value(b).norm();
    if (na < 1e-12 || nb < 1e-12) {
        throw DomainError("cosine: zero-norm input");
    }
    Mat out(1, 1);
    const double c = value(a).cwiseProduct(value(b)).sum() / (na * nb);
    out(0, 0) = c;
    Var r = push(std::move(out), needs(a) || needs(b), nullptr);
    nodes_[r.id].pullback = [a, b, r, na, nb, c](Tape& t) {
        const double g = t.grad(r)(0, 0);
        // d cos / d a = b/(|a||b|) - cos * a/|a|^2
        if (t.needs(a))
            t.grad_ref(a) += g * (t.value(b) / (na * nb) - (c / (na * na)) * t.value(a));
        if (t.needs(b))
            t.grad_ref(b) += g * (t.value(a) / (na * nb) - (c / (nb * nb)) * t.value(b));
    };
    return r;
}

Var Tape::max_of(const std::vector<Var>& scalars) {
    if (scalars.empty()) {
        throw StructuralError("max_of: empty argument list");
    }
    int best = 0;
    bool ng = false;
    for (std::size_t i = 0; i < scalars.size(); ++i) {
        if (value(scalars[i]).size() != 1) {
            throw StructuralError("max_of: expects scalar nodes");
        }
        ng = ng || needs(scalars[i]);
        if (scalar(scalars[i]) > scalar(scalars[best])) best = static_cast<int>(i);
    }
    Mat out(1, 1);
    out(0, 0) = scalar(scalars[best]);
    Var winner = scalars[best];
    Var r = push(std::move(out), ng, nullptr);
    nodes_[r.id].pullback = [winner, r](Tape& t) {
        if (t.needs(winner)) t.grad_ref(winner)(0, 0) += t.grad(r)(0, 0);
    };
    return r;
}

void Tape::backward(Var target) {
    if (!target.valid() || value(target).size() != 1) {
        throw StructuralError("backward: target must be a scalar node");
    }
    if (!needs(target)) {
        return; // constant graph, nothing to do
    }
    grad_ref(target)(0, 0) = 1.0;
    for (int i = target.id; i >= 0; --i) {
        if (nodes_[i].needs_grad && nodes_[i].pullback) {
            nodes_[i].pullback(*this);
        }
    }
}

} // namespace mytm::diff
