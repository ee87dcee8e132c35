// Copyright Contributors to the anisogauss project
// SPDX-License-Identifier: Apache-2.0

#include "anisogauss/transfer/cks.hpp"

#include "anisogauss/errors.hpp"
#include "anisogauss/numerics/linalg.hpp"
#include "anisogauss/numerics/tensor_io.hpp"

#include "json.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace anisogauss::transfer {

namespace ad = numerics::ad;
using numerics::matmul;
using numerics::matmul_tn;

double PatternBasis::orthonormality_error() const {
    if (rank() == 0) {
        return 0.0;
    }
    const DenseMatrix g = matmul_tn(basis, basis);
    double err = 0.0;
    for (std::size_t i = 0; i < g.rows(); ++i) {
        for (std::size_t j = 0; j < g.cols(); ++j) {
            err = std::max(err, std::abs(g(i, j) - (i == j ? 1.0 : 0.0)));
        }
    }
    return err;
}

namespace {

void check_w(const DenseMatrix& w, const PatternBasis& b) {
    if (w.rows() != b.rows()) {
        throw DimensionError("project_cks: W and B row counts differ");
    }
    if (numerics::frobenius_norm(w) <= 1e-12) {
        throw ZeroMatrixError("project_cks: W is numerically zero");
    }
}

DenseMatrix project(const DenseMatrix& w, const PatternBasis& b) {
    if (b.rank() == 0) {
        return DenseMatrix(w.rows(), w.cols());
    }
    return matmul(b.basis, matmul_tn(b.basis, w));
}

} // namespace

Projection project_cks(const DenseMatrix& w, const PatternBasis& basis) {
    check_w(w, basis);
    Projection p;
    p.projected = project(w, basis);
    p.residual = w - p.projected;
    p.rho = numerics::frobenius_norm(p.residual) / numerics::frobenius_norm(w);
    return p;
}

Var relative_residual_sq(const Var& w, const PatternBasis& basis) {
    check_w(w.value(), basis);
    Var residual = w;
    if (basis.rank() > 0) {
        const DenseMatrix bbt = numerics::matmul_nt(basis.basis, basis.basis);
        residual = ad::sub(w, ad::matmul(Var::constant(bbt), w));
    }
    return ad::div_scalar(ad::sum(ad::square(residual)), ad::sum(ad::square(w)));
}

ModulationNet ModulationNet::init(std::size_t input_dim, std::uint64_t seed, Modulation activation) {
    std::mt19937_64 rng(seed);
    ModulationNet net;
    net.layer = numerics::Linear::xavier(input_dim, 1, rng, "cks.modulation");
    net.activation = activation;
    return net;
}

Var ModulationNet::operator()(const Var& zbar) const {
    const Var a = layer(zbar);
    return activation == Modulation::Softplus ? ad::softplus(a) : ad::sigmoid(a);
}

void ModulationNet::collect(numerics::NamedParams& out) const { layer.collect(out); }

Var reg_loss(const Var& w, const PatternBasis& basis, const Var& zbar, const ModulationNet& net) {
    return ad::mul_scalar(relative_residual_sq(w, basis), net(zbar));
}

void TransferConfig::validate() const {
    if (!(kappa > 0.0)) {
        throw ValueError("transfer: kappa must be positive");
    }
    if (!(epsilon > 0.0)) {
        throw ValueError("transfer: epsilon must be positive");
    }
    if (!(eta > 0.0 && eta <= 1.0)) {
        throw ValueError("transfer: eta must lie in (0, 1]");
    }
}

double descriptor_spread(const DenseMatrix& descriptors) {
    const std::size_t n = descriptors.rows();
    if (n == 0) {
        throw ValueError("descriptor_spread: no descriptors");
    }
    std::vector<double> mean(descriptors.cols(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < mean.size(); ++c) {
            mean[c] += descriptors(i, c);
        }
    }
    for (double& m : mean) {
        m /= static_cast<double>(n);
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < mean.size(); ++c) {
            const double d = descriptors(i, c) - mean[c];
            acc += d * d;
        }
    }
    return std::sqrt(acc / static_cast<double>(n));
}

BasisUpdateRecord maybe_update_basis(const DenseMatrix& w, PatternBasis& basis, const DenseMatrix& descriptors,
                                     const TransferConfig& config, const std::string& scene_id) {
    config.validate();
    const Projection p = project_cks(w, basis);
    BasisUpdateRecord rec;
    rec.scene_id = scene_id;
    rec.rho = p.rho;
    rec.sigma_f = descriptor_spread(descriptors);
    rec.rho_prime = p.rho * (1.0 + config.kappa * rec.sigma_f);
    rec.eta = config.eta;
    rec.rank_after = basis.rank();
    rec.rho_after = p.rho;
    const std::size_t q = basis.rows();
    if (rec.rho_prime <= config.epsilon) {
        basis.history.push_back(rec);
        return rec;
    }
    const numerics::Svd s = numerics::svd(p.residual);
    double total = 0.0;
    for (double v : s.values) {
        total += v * v;
    }
    std::size_t r_new = 0;
    if (total > 0.0) {
        double acc = 0.0;
        const double floor = 1e-12 * s.values.front();
        for (std::size_t i = 0; i < s.values.size() && s.values[i] > floor; ++i) {
            acc += s.values[i] * s.values[i];
            r_new = i + 1;
            if (acc >= (config.eta - 1e-12) * total) {
                break;
            }
        }
    }
    if (r_new == 0) {
        basis.history.push_back(rec);
        return rec;
    }
    DenseMatrix stacked(q, basis.rank() + r_new);
    for (std::size_t r = 0; r < q; ++r) {
        for (std::size_t c = 0; c < basis.rank(); ++c) {
            stacked(r, c) = basis.basis(r, c);
        }
        for (std::size_t c = 0; c < r_new; ++c) {
            stacked(r, basis.rank() + c) = s.u(r, c);
        }
    }
    DenseMatrix next = numerics::orth(stacked);
    if (next.cols() > q - 1) {
        // Keep the q - 1 columns capturing most of W, in their original order.
        const DenseMatrix energy = matmul_tn(next, w);
        std::vector<double> e(next.cols(), 0.0);
        for (std::size_t c = 0; c < next.cols(); ++c) {
            for (double v : energy.row(c)) {
                e[c] += v * v;
            }
        }
        std::vector<std::size_t> order(next.cols());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return e[a] > e[b]; });
        order.resize(q - 1);
        std::sort(order.begin(), order.end());
        DenseMatrix kept(q, q - 1);
        for (std::size_t k = 0; k < order.size(); ++k) {
            for (std::size_t r = 0; r < q; ++r) {
                kept(r, k) = next(r, order[k]);
            }
        }
        next = std::move(kept);
    }
    rec.added = next.cols() - basis.rank();
    basis.basis = std::move(next);
    rec.updated = true;
    rec.rank_after = basis.rank();
    rec.rho_after = project_cks(w, basis).rho;
    basis.history.push_back(rec);
    return rec;
}

namespace {

constexpr std::array<char, 4> kMagic{'A', 'G', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

nlohmann::ordered_json history_json(const BasisStore& store) {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& [name, b] : store) {
        auto arr = nlohmann::ordered_json::array();
        for (const auto& h : b.history) {
            arr.push_back({{"scene_id", h.scene_id},
                           {"rho", h.rho},
                           {"sigma_f", h.sigma_f},
                           {"rho_prime", h.rho_prime},
                           {"added", h.added},
                           {"eta", h.eta},
                           {"updated", h.updated},
                           {"rank_after", h.rank_after},
                           {"rho_after", h.rho_after}});
        }
        j[name] = std::move(arr);
    }
    return j;
}

} // namespace

void save_bases(const BasisStore& store, const std::filesystem::path& path) {
    std::ostringstream os(std::ios::binary);
    os.write(kMagic.data(), kMagic.size());
    numerics::write_u32(os, kVersion);
    numerics::write_u32(os, static_cast<std::uint32_t>(store.size()));
    for (const auto& [name, b] : store) {
        numerics::write_u32(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        numerics::write_u64(os, b.basis.rows());
        numerics::write_u64(os, b.basis.cols());
        for (double v : b.basis.data()) {
            numerics::write_f64(os, v);
        }
    }
    const std::string json = history_json(store).dump();
    numerics::write_u64(os, json.size());
    os.write(json.data(), static_cast<std::streamsize>(json.size()));
    const std::string body = os.str();
    const auto crc = static_cast<std::uint32_t>(
        ::crc32(0L, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size())));
    std::ofstream f(path, std::ios::binary);
    if (!f) {
        throw IoError("cannot open for writing: " + path.string());
    }
    f.write(body.data(), static_cast<std::streamsize>(body.size()));
    numerics::write_u32(f, crc);
    if (!f) {
        throw IoError("write failed: " + path.string());
    }
}

BasisStore load_bases(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw IoError("cannot open: " + path.string());
    }
    const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (bytes.size() < 16 || !std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
        throw IoError("not a pattern-basis file: " + path.string());
    }
    std::istringstream is(bytes, std::ios::binary);
    is.seekg(4);
    const std::uint32_t version = numerics::read_u32(is);
    if (version != kVersion) {
        throw VersionError("unsupported basis file version " + std::to_string(version));
    }
    const std::string body = bytes.substr(0, bytes.size() - 4);
    std::istringstream tail(bytes.substr(bytes.size() - 4), std::ios::binary);
    const std::uint32_t stored = numerics::read_u32(tail);
    const auto crc = static_cast<std::uint32_t>(
        ::crc32(0L, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size())));
    if (crc != stored) {
        throw ChecksumError("basis file checksum mismatch: " + path.string());
    }
    BasisStore store;
    const std::uint32_t count = numerics::read_u32(is);
    for (std::uint32_t k = 0; k < count; ++k) {
        const std::uint32_t len = numerics::read_u32(is);
        std::string name(len, '\0');
        if (!is.read(name.data(), len)) {
            throw IoError("truncated basis file");
        }
        const std::uint64_t q = numerics::read_u64(is);
        const std::uint64_t r = numerics::read_u64(is);
        if (q * r > body.size()) {
            throw IoError("basis shape exceeds file size");
        }
        PatternBasis b{DenseMatrix(q, r), {}};
        for (auto& v : b.basis.data()) {
            v = numerics::read_f64(is);
        }
        store.emplace(std::move(name), std::move(b));
    }
    const std::uint64_t json_len = numerics::read_u64(is);
    std::string json(json_len, '\0');
    if (!is.read(json.data(), static_cast<std::streamsize>(json_len))) {
        throw IoError("truncated basis history");
    }
    const auto j = nlohmann::json::parse(json, nullptr, false);
    if (j.is_discarded()) {
        throw IoError("malformed basis history");
    }
    try {
        for (auto& [name, b] : store) {
            if (!j.contains(name)) {
                continue;
            }
            for (const auto& h : j[name]) {
                BasisUpdateRecord rec;
                rec.scene_id = h.at("scene_id").get<std::string>();
                rec.rho = h.at("rho").get<double>();
                rec.sigma_f = h.at("sigma_f").get<double>();
                rec.rho_prime = h.at("rho_prime").get<double>();
                rec.added = h.at("added").get<std::size_t>();
                rec.eta = h.at("eta").get<double>();
                rec.updated = h.at("updated").get<bool>();
                rec.rank_after = h.at("rank_after").get<std::size_t>();
                rec.rho_after = h.at("rho_after").get<double>();
                b.history.push_back(std::move(rec));
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("malformed basis history: ") + e.what());
    }
    return store;
}

void save_basis(const PatternBasis& basis, const std::filesystem::path& path) {
    save_bases({{"basis", basis}}, path);
}

PatternBasis load_basis(const std::filesystem::path& path) {
    BasisStore store = load_bases(path);
    if (store.size() != 1) {
        throw IoError("expected exactly one basis in " + path.string());
    }
    return std::move(store.begin()->second);
}

} // namespace anisogauss::transfer
