#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "pipcdr/mlp.hpp"

namespace pipcdr {

// Online encoder, its EMA target copy, and the predictor head. The target is
// never touched by sgd_step; it only moves through ema_update.
struct NetworkStack {
    Mlp online;
    Mlp target;
    Mlp predictor;
    bool predictor_enabled = true;
    double momentum = 0.996;
    long step = 0;

    NetworkStack() = default;
    NetworkStack(const MlpSpec& enc, const MlpSpec& pred, double m, Rng& rng)
        : momentum(m) {
        Rng r_enc = rng.fork(1);
        Rng r_pred = rng.fork(2);
        online = Mlp(enc, r_enc);
        target = online; // target starts as an exact copy
        predictor = Mlp(pred, r_pred);
    }

    const Mlp* predictor_or_null() const { return predictor_enabled ? &predictor : nullptr; }
};

inline void ema_update(NetworkStack& stack) { ema_update(stack.target, stack.online, stack.momentum); }

namespace detail {

inline std::string hexd(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%a", v);
    return buf;
}

inline void write_net(std::ostream& out, const Mlp& net) {
    out << "spec " << net.spec.widths.size();
    for (auto w : net.spec.widths) out << ' ' << w;
    out << " bn " << (net.spec.batch_standardize ? 1 : 0) << '\n';
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        out << "layer " << l << '\n';
        out << "W " << net.W[l].rows << ' ' << net.W[l].cols << '\n';
        for (std::size_t i = 0; i < net.W[l].rows; ++i) {
            for (std::size_t j = 0; j < net.W[l].cols; ++j) {
                if (j) out << ' ';
                out << hexd(net.W[l].at(i, j));
            }
            out << '\n';
        }
        out << "b " << net.b[l].size() << '\n';
        for (std::size_t j = 0; j < net.b[l].size(); ++j) out << (j ? " " : "") << hexd(net.b[l][j]);
        out << '\n';
        if (net.has_bn(l)) {
            out << "gamma " << net.gamma[l].size() << '\n';
            for (std::size_t j = 0; j < net.gamma[l].size(); ++j)
                out << (j ? " " : "") << hexd(net.gamma[l][j]);
            out << '\n';
            out << "beta " << net.beta[l].size() << '\n';
            for (std::size_t j = 0; j < net.beta[l].size(); ++j)
                out << (j ? " " : "") << hexd(net.beta[l][j]);
            out << '\n';
        }
    }
}

inline double parse_hexd(std::istream& in) {
    std::string tok;
    if (!(in >> tok)) throw ParseError("checkpoint: unexpected end of file");
    char* end = nullptr;
    double v = std::strtod(tok.c_str(), &end);
    if (end == tok.c_str()) throw ParseError("checkpoint: bad number '" + tok + "'");
    return v;
}

inline void expect_tok(std::istream& in, const std::string& want) {
    std::string tok;
    if (!(in >> tok) || tok != want)
        throw ParseError("checkpoint: expected '" + want + "', got '" + tok + "'");
}

inline Mlp read_net(std::istream& in) {
    expect_tok(in, "spec");
    std::size_t n = 0;
    in >> n;
    MlpSpec spec;
    spec.widths.resize(n);
    for (auto& w : spec.widths) in >> w;
    expect_tok(in, "bn");
    int bn = 0;
    in >> bn;
    spec.batch_standardize = bn != 0;
    Rng dummy(0);
    Mlp net(spec, dummy);
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        expect_tok(in, "layer");
        std::size_t li = 0;
        in >> li;
        expect_tok(in, "W");
        std::size_t r = 0, c = 0;
        in >> r >> c;
        if (r != net.W[l].rows || c != net.W[l].cols) throw ParseError("checkpoint: W shape mismatch");
        for (auto& v : net.W[l].data) v = parse_hexd(in);
        expect_tok(in, "b");
        std::size_t bl = 0;
        in >> bl;
        if (bl != net.b[l].size()) throw ParseError("checkpoint: b length mismatch");
        for (auto& v : net.b[l]) v = parse_hexd(in);
        if (net.has_bn(l)) {
            expect_tok(in, "gamma");
            in >> bl;
            for (auto& v : net.gamma[l]) v = parse_hexd(in);
            expect_tok(in, "beta");
            in >> bl;
            for (auto& v : net.beta[l]) v = parse_hexd(in);
        }
    }
    return net;
}

} // namespace detail

inline void save_checkpoint(const NetworkStack& stack, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open for writing: " + path);
    out << "pipcdr-stack v1\n";
    out << "step " << stack.step << '\n';
    out << "momentum " << detail::hexd(stack.momentum) << '\n';
    out << "predictor_enabled " << (stack.predictor_enabled ? 1 : 0) << '\n';
    out << "net online\n";
    detail::write_net(out, stack.online);
    out << "net target\n";
    detail::write_net(out, stack.target);
    out << "net predictor\n";
    detail::write_net(out, stack.predictor);
}

inline NetworkStack load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open: " + path);
    std::string magic, version;
    in >> magic >> version;
    if (magic != "pipcdr-stack" || version != "v1") throw ParseError("checkpoint: bad header");
    NetworkStack stack;
    detail::expect_tok(in, "step");
    in >> stack.step;
    detail::expect_tok(in, "momentum");
    stack.momentum = detail::parse_hexd(in);
    detail::expect_tok(in, "predictor_enabled");
    int pe = 0;
    in >> pe;
    stack.predictor_enabled = pe != 0;
    detail::expect_tok(in, "net");
    detail::expect_tok(in, "online");
    stack.online = detail::read_net(in);
    detail::expect_tok(in, "net");
    detail::expect_tok(in, "target");
    stack.target = detail::read_net(in);
    detail::expect_tok(in, "net");
    detail::expect_tok(in, "predictor");
    stack.predictor = detail::read_net(in);
    return stack;
}

} // namespace pipcdr
