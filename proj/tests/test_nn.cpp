#include "support.hpp"

#include "s2fpn/errors.hpp"
#include "s2fpn/nn.hpp"
#include "s2fpn/sphops.hpp"

#include <doctest.h>

#include <algorithm>

using namespace s2fpn;

namespace {

std::shared_ptr<const PdoOperators> pdo(int level)
{
    return std::make_shared<const PdoOperators>(make_pdo_operators(build_mesh(level)));
}

std::vector<Parameter*> trainable(Module& m)
{
    std::vector<Parameter*> all, out;
    m.collect(all);
    for (Parameter* p : all) {
        if (p->trainable()) out.push_back(p);
    }
    return out;
}

void set_all(Parameter& p, std::initializer_list<double> values)
{
    auto v = p.mutable_value();
    REQUIRE(v.size() == values.size());
    std::copy(values.begin(), values.end(), v.begin());
}

MeshSignal random_signal(int level, std::size_t batch, std::size_t channels, std::uint64_t seed)
{
    MeshSignal s(level, batch, channels);
    oracle::randomize(s, seed);
    return s;
}

struct GradErrors {
    double input = 0.0;
    double params = 0.0;
};

// Loss <w, f(x)> with a fixed random w; compares backward() with central
// differences for every input entry and every trainable scalar.
GradErrors check_gradients(Module& m, const MeshSignal& x, Mode mode = Mode::train, double h = 1e-5)
{
    const MeshSignal y0 = m.forward(x, mode);
    const MeshSignal w = random_signal(y0.level(), y0.batch(), y0.channels(), 99);
    const auto params = trainable(m);
    zero_grads(params);
    const MeshSignal gx = m.backward(w);
    std::vector<std::vector<double>> analytic;
    for (Parameter* p : params) analytic.emplace_back(p->grad().begin(), p->grad().end());

    GradErrors err;
    MeshSignal xx = x;
    auto loss = [&] { return dot(w, m.forward(xx, mode)); };
    std::vector<double> fd(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) fd[i] = oracle::central_difference(loss, xx.values()[i], h);
    err.input = oracle::max_rel_error(gx.values(), fd);

    // Biases feeding a training-mode BN have an identically zero gradient, so
    // errors are measured against the layer's overall gradient scale.
    std::vector<std::vector<double>> numeric;
    double scale = 1e-8;
    for (Parameter* p : params) {
        std::vector<double> fp(p->size());
        for (std::size_t i = 0; i < p->size(); ++i) {
            fp[i] = oracle::central_difference([&] { return dot(w, m.forward(x, mode)); }, p->mutable_value()[i], h);
            scale = std::max(scale, std::abs(fp[i]));
        }
        numeric.push_back(std::move(fp));
    }
    for (std::size_t k = 0; k < params.size(); ++k) {
        err.params = std::max(err.params, oracle::max_rel_error(analytic[k], numeric[k], scale));
    }
    return err;
}

double variance(std::span<const double> v)
{
    double mean = 0.0, ss = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    for (double x : v) ss += (x - mean) * (x - mean);
    return ss / static_cast<double>(v.size());
}

} // namespace

TEST_SUITE("nn") {

TEST_CASE("meshconv identity coefficient reproduces the input")
{
    Rng rng(1);
    MeshConv conv(1, 1, pdo(2), "c", rng);
    set_all(conv.theta(), {1, 0, 0, 0});
    set_all(conv.bias(), {0});
    const MeshSignal x = random_signal(2, 2, 1, 3);
    CHECK(conv.forward(x, Mode::train) == x);
    const MeshSignal g = random_signal(2, 2, 1, 4);
    CHECK(conv.backward(g) == g);
}

TEST_CASE("meshconv laplacian coefficient kills constants")
{
    Rng rng(1);
    for (StencilUnits u : {StencilUnits::raw, StencilUnits::mesh}) {
        MeshConv conv(1, 1, pdo(3), "c", rng, u);
        set_all(conv.theta(), {0, 0, 0, 1});
        set_all(conv.bias(), {0});
        const MeshSignal y = conv.forward(MeshSignal(3, 1, 1, 2.0), Mode::eval);
        for (double v : y.values()) CHECK(std::abs(v) < 1e-9);
    }
}

TEST_CASE("meshconv matches the operator definition")
{
    const int level = 2;
    Rng rng(5);
    auto ops = pdo(level);
    for (StencilUnits u : {StencilUnits::raw, StencilUnits::mesh}) {
        MeshConv conv(3, 2, ops, "c", rng, u);
        oracle::randomize(conv.bias(), 8);
        const MeshSignal x = random_signal(level, 2, 3, 6);
        const MeshSignal y = conv.forward(x, Mode::train);
        const double h = u == StencilUnits::mesh ? ops->edge_length : 1.0;
        const std::array<double, 4> scale{1.0, h, h, h * h};
        const std::array<const SparseOperator*, 3> d{&ops->gx, &ops->gy, &ops->lap};
        const auto th = conv.theta().value();
        double worst = 0.0;
        for (std::size_t b = 0; b < 2; ++b) {
            for (std::size_t co = 0; co < 2; ++co) {
                Eigen::VectorXd want = Eigen::VectorXd::Constant(162, conv.bias().value()[co]);
                for (std::size_t ci = 0; ci < 3; ++ci) {
                    auto xin = x.channel(b, ci);
                    const Eigen::VectorXd xv = Eigen::Map<const Eigen::VectorXd>(xin.data(), 162);
                    want += th[(co * 3 + ci) * 4] * xv;
                    for (std::size_t k = 0; k < 3; ++k) {
                        want += th[(co * 3 + ci) * 4 + k + 1] * scale[k + 1] * (oracle::dense(*d[k]) * xv);
                    }
                }
                for (Eigen::Index v = 0; v < 162; ++v) worst = std::max(worst, std::abs(want(v) - y.at(b, co, v)));
            }
        }
        CHECK(worst < 1e-10);
    }
}

TEST_CASE("meshconv stencil units reparameterise the same map")
{
    Rng r1(3), r2(3);
    auto ops = pdo(2);
    MeshConv raw(2, 2, ops, "r", r1, StencilUnits::raw);
    MeshConv mesh(2, 2, ops, "m", r2, StencilUnits::mesh);
    const double h = ops->edge_length;
    auto t = mesh.theta().mutable_value();
    auto tr = raw.theta().value();
    for (std::size_t i = 0; i < t.size(); ++i) {
        const int k = static_cast<int>(i % 4);
        t[i] = tr[i] / std::pow(h, k == 3 ? 2 : (k == 0 ? 0 : 1));
    }
    const MeshSignal x = random_signal(2, 1, 2, 2);
    const MeshSignal a = raw.forward(x, Mode::eval);
    const MeshSignal b = mesh.forward(x, Mode::eval);
    CHECK(oracle::max_rel_error(a.values(), b.values()) < 1e-12);
}

TEST_CASE("meshconv superposition")
{
    Rng rng(2);
    MeshConv conv(2, 3, pdo(2), "c", rng);
    std::fill(conv.bias().mutable_value().begin(), conv.bias().mutable_value().end(), 0.0);
    MeshSignal x = random_signal(2, 1, 2, 1), y = random_signal(2, 1, 2, 2);
    MeshSignal combo = x;
    combo *= 0.7;
    MeshSignal y2 = y;
    y2 *= -1.3;
    combo += y2;
    const MeshSignal lhs = conv.forward(combo, Mode::eval);
    MeshSignal rhs = conv.forward(x, Mode::eval);
    rhs *= 0.7;
    MeshSignal ry = conv.forward(y, Mode::eval);
    ry *= -1.3;
    rhs += ry;
    CHECK(oracle::max_rel_error(lhs.values(), rhs.values(), 1.0) < 1e-12);
}

TEST_CASE("zero-padded constants give dotted meshconv responses")
{
    OperatorBank bank(3);
    Rng rng(1);
    MeshConv conv(1, 1, bank.pdo(3), "c", rng, StencilUnits::raw);
    set_all(conv.theta(), {1, 1, 1, 1});
    set_all(conv.bias(), {0});
    const MeshSignal c(2, 1, 1, 1.0);
    Transition zp(bank.up(3, UpMode::zeropad));
    Transition bl(bank.up(3, UpMode::bilinear));
    const double vz = variance(conv.forward(zp.forward(c, Mode::eval), Mode::eval).values());
    const double vb = variance(conv.forward(bl.forward(c, Mode::eval), Mode::eval).values());
    MESSAGE("per-vertex variance: zeropad " << vz << ", bilinear " << vb);
    CHECK(vz >= 10.0 * vb);
    CHECK(vz > 1.0);
}

TEST_CASE("meshconv shape errors")
{
    Rng rng(1);
    MeshConv conv(2, 1, pdo(1), "c", rng);
    CHECK_THROWS_AS(conv.forward(MeshSignal(1, 1, 3), Mode::eval), ShapeError);
    CHECK_THROWS_AS(conv.forward(MeshSignal(2, 1, 2), Mode::eval), ShapeError);
    CHECK_THROWS_AS(conv.forward(MeshSignal(1, 0, 2), Mode::eval), InputError);
}

TEST_CASE("initialisation follows fan-in bounds")
{
    Rng rng(11);
    MeshConv conv(6, 5, pdo(1), "c", rng);
    for (double v : conv.theta().value()) CHECK(std::abs(v) <= 1.0 / std::sqrt(24.0));
    for (double v : conv.bias().value()) CHECK(v == 0.0);
    Conv1x1 lin(9, 4, "l", rng);
    for (double v : lin.weight().value()) CHECK(std::abs(v) <= 1.0 / 3.0);
    BatchNorm bn(3, "bn");
    for (double v : bn.scale().value()) CHECK(v == 1.0);
    for (double v : bn.shift().value()) CHECK(v == 0.0);

    Rng a(42), b(42);
    MeshConv c1(3, 3, pdo(1), "x", a), c2(3, 3, pdo(1), "x", b);
    CHECK(std::equal(c1.theta().value().begin(), c1.theta().value().end(), c2.theta().value().begin()));
}

TEST_CASE("conv1x1 identity, channel sum and loop oracle")
{
    Rng rng(4);
    Conv1x1 id(3, 3, "id", rng);
    set_all(id.weight(), {1, 0, 0, 0, 1, 0, 0, 0, 1});
    set_all(id.bias(), {0, 0, 0});
    const MeshSignal x = random_signal(1, 2, 3, 5);
    CHECK(id.forward(x, Mode::eval) == x);

    Conv1x1 sum(3, 1, "sum", rng);
    set_all(sum.weight(), {1, 1, 1});
    set_all(sum.bias(), {0});
    const MeshSignal s = sum.forward(x, Mode::eval);
    for (std::size_t v = 0; v < 42; ++v) {
        CHECK(std::abs(s.at(1, 0, v) - (x.at(1, 0, v) + x.at(1, 1, v) + x.at(1, 2, v))) < 1e-15);
    }

    Conv1x1 r(5, 3, "r", rng);
    oracle::randomize(r.bias(), 3);
    const MeshSignal x5 = random_signal(1, 2, 5, 6);
    const MeshSignal y = r.forward(x5, Mode::eval);
    double worst = 0.0;
    for (std::size_t b = 0; b < 2; ++b)
        for (std::size_t co = 0; co < 3; ++co)
            for (std::size_t v = 0; v < 42; ++v) {
                double acc = r.bias().value()[co];
                for (std::size_t ci = 0; ci < 5; ++ci) acc += r.weight().value()[co * 5 + ci] * x5.at(b, ci, v);
                worst = std::max(worst, std::abs(acc - y.at(b, co, v)));
            }
    CHECK(worst < 1e-12);
    CHECK_THROWS_AS(r.forward(x, Mode::eval), ShapeError);
}

TEST_CASE("batchnorm normalises per channel in training")
{
    BatchNorm bn(2, "bn");
    MeshSignal x = random_signal(2, 3, 2, 1);
    for (double& v : x.values()) v = 4.0 * v + 1.5;
    const MeshSignal y = bn.forward(x, Mode::train);
    for (std::size_t c = 0; c < 2; ++c) {
        double s = 0.0, ss = 0.0, n = 0.0;
        for (std::size_t b = 0; b < 3; ++b) {
            for (double v : y.channel(b, c)) {
                s += v;
                ss += v * v;
                n += 1.0;
            }
        }
        CHECK(std::abs(s / n) < 1e-6);
        CHECK(std::abs(ss / n - 1.0) < 1e-6);
    }
    CHECK_THROWS_AS(bn.forward(MeshSignal(2, 0, 2), Mode::train), InputError);
    CHECK_THROWS_AS(bn.forward(MeshSignal(2, 1, 3), Mode::train), ShapeError);
}

TEST_CASE("batchnorm leaves normalised input nearly unchanged")
{
    BatchNorm bn(1, "bn");
    MeshSignal x = random_signal(2, 2, 1, 7);
    const double n = static_cast<double>(x.size());
    double mean = 0.0;
    for (double v : x.values()) mean += v / n;
    double var = 0.0;
    for (double v : x.values()) var += (v - mean) * (v - mean) / n;
    for (double& v : x.values()) v = (v - mean) / std::sqrt(var);
    const MeshSignal y = bn.forward(x, Mode::train);
    CHECK(oracle::max_rel_error(y.values(), x.values()) < 1e-5);
}

TEST_CASE("batchnorm running statistics follow the moving average")
{
    BatchNorm bn(1, "bn");
    double rm = 0.0, rv = 1.0;
    for (int step = 0; step < 2; ++step) {
        MeshSignal x = random_signal(1, 2, 1, 20 + step);
        for (double& v : x.values()) v = 2.0 * v + step;
        const double n = static_cast<double>(x.size());
        double mean = 0.0;
        for (double v : x.values()) mean += v;
        mean /= n;
        double ss = 0.0;
        for (double v : x.values()) ss += (v - mean) * (v - mean);
        rm = 0.9 * rm + 0.1 * mean;
        rv = 0.9 * rv + 0.1 * ss / (n - 1.0);
        bn.forward(x, Mode::train);
    }
    CHECK(bn.running_mean().value()[0] == doctest::Approx(rm).epsilon(1e-14));
    CHECK(bn.running_var().value()[0] == doctest::Approx(rv).epsilon(1e-14));

    // inference uses the running statistics
    const MeshSignal x = random_signal(1, 1, 1, 30);
    const MeshSignal y = bn.forward(x, Mode::eval);
    for (std::size_t v = 0; v < 42; ++v) {
        CHECK(y.at(0, 0, v) == doctest::Approx((x.at(0, 0, v) - rm) / std::sqrt(rv + 1e-5)).epsilon(1e-12));
    }
}

TEST_CASE("relu values and idempotence")
{
    ReLU relu;
    MeshSignal x(0, 1, 1);
    x.at(0, 0, 0) = -1.0;
    x.at(0, 0, 1) = 2.0;
    const MeshSignal y = relu.forward(x, Mode::eval);
    CHECK(y.at(0, 0, 0) == 0.0);
    CHECK(y.at(0, 0, 1) == 2.0);
    CHECK(relu.forward(y, Mode::eval) == y);
}

TEST_CASE("resblock with a zero main path reduces to the skip")
{
    Rng rng(3);
    ResBlock block(3, 2, 3, pdo(1), "rb", rng);
    CHECK_FALSE(block.has_projection());
    std::vector<Parameter*> main;
    block.main_path().collect(main);
    for (Parameter* p : main) {
        if (p->name().find("scale") != std::string::npos || p->name().find("running") != std::string::npos) continue;
        std::fill(p->mutable_value().begin(), p->mutable_value().end(), 0.0);
    }
    const MeshSignal x = random_signal(1, 2, 3, 4);
    const MeshSignal y = block.forward(x, Mode::train);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(y.values()[i] == std::max(0.0, x.values()[i]));
    CHECK(y.all_finite());
}

TEST_CASE("parameter counts match the closed form")
{
    Rng rng(0);
    auto ops = pdo(1);
    auto count = [](Module& m) { return static_cast<long>(count_parameters(trainable(m))); };
    Conv1x1 a(32, 16, "a", rng);
    MeshConv b(16, 16, ops, "b", rng);
    Conv1x1 c(16, 64, "c", rng);
    Conv1x1 d(32, 64, "d", rng);
    CHECK(count(a) == 528);
    CHECK(count(b) == 1040);
    CHECK(count(c) == 1088);
    CHECK(count(d) == 2112);
    ResBlock rb(32, 16, 64, ops, "rb", rng);
    CHECK(rb.has_projection());
    CHECK(count(rb) == 528 + 1040 + 1088 + 2112 + 2 * (16 + 16 + 64 + 64));
    CHECK(count(rb) == oracle::resblock_params(32, 16, 64, true));
    ResBlock same(8, 2, 8, ops, "s", rng);
    CHECK(count(same) == oracle::resblock_params(8, 2, 8, false));
    ResBlock forced(8, 2, 8, ops, "f", rng, true);
    CHECK(count(forced) == oracle::resblock_params(8, 2, 8, true));
}

TEST_CASE("gradient checks at layer scale")
{
    Rng rng(17);
    auto ops = pdo(2);
    OperatorBank bank(2);
    const MeshSignal x3 = random_signal(2, 2, 3, 1);

    SUBCASE("meshconv raw")
    {
        MeshConv m(3, 2, ops, "m", rng, StencilUnits::raw);
        oracle::randomize(m.bias(), 2);
        const auto e = check_gradients(m, x3);
        CHECK(e.input < 1e-5);
        CHECK(e.params < 1e-5);
    }
    SUBCASE("meshconv mesh units")
    {
        MeshConv m(3, 2, ops, "m", rng, StencilUnits::mesh);
        const auto e = check_gradients(m, x3);
        CHECK(e.input < 1e-5);
        CHECK(e.params < 1e-5);
    }
    SUBCASE("conv1x1")
    {
        Conv1x1 m(3, 4, "l", rng);
        const auto e = check_gradients(m, x3);
        CHECK(e.input < 1e-5);
        CHECK(e.params < 1e-5);
    }
    SUBCASE("batchnorm train and eval")
    {
        BatchNorm m(3, "bn");
        oracle::randomize(m.scale(), 3);
        oracle::randomize(m.shift(), 4);
        auto e = check_gradients(m, x3, Mode::train);
        CHECK(e.input < 1e-5);
        CHECK(e.params < 1e-5);
        e = check_gradients(m, x3, Mode::eval);
        CHECK(e.input < 1e-5);
        CHECK(e.params < 1e-5);
    }
    SUBCASE("relu")
    {
        ReLU m;
        CHECK(check_gradients(m, x3).input < 1e-5);
    }
    SUBCASE("transitions")
    {
        for (DownMode d : {DownMode::drop, DownMode::average}) {
            Transition t(bank.down(2, d));
            CHECK(check_gradients(t, x3).input < 1e-5);
        }
        const MeshSignal coarse = random_signal(1, 2, 3, 9);
        for (UpMode u : {UpMode::zeropad, UpMode::bilinear}) {
            Transition t(bank.up(2, u));
            CHECK(check_gradients(t, coarse).input < 1e-5);
        }
    }
    SUBCASE("resblocks")
    {
        ResBlock plain(3, 2, 3, ops, "p", rng, false, StencilUnits::mesh);
        auto e = check_gradients(plain, x3);
        CHECK(e.input < 1e-5);
        CHECK(e.params < 1e-5);
        ResBlock proj(3, 2, 5, ops, "q", rng, false, StencilUnits::raw);
        e = check_gradients(proj, x3);
        CHECK(e.input < 1e-5);
        CHECK(e.params < 1e-5);
    }
    SUBCASE("down blocks")
    {
        for (bool swapped : {true, false}) {
            DownBlock db(3, 3, 4, ResampleSpec{DownMode::average, UpMode::bilinear, swapped}, bank, 2, "d", rng,
                         StencilUnits::mesh);
            const auto e = check_gradients(db, x3);
            CAPTURE(swapped);
            CHECK(e.input < 1e-5);
            CHECK(e.params < 1e-5);
        }
    }
    SUBCASE("conv-bn-relu stack")
    {
        auto seq = conv_bn_relu(3, 4, ops, "cbr", rng, StencilUnits::mesh);
        const auto e = check_gradients(*seq, x3);
        CHECK(e.input < 1e-5);
        CHECK(e.params < 1e-5);
    }
}

TEST_CASE("backward needs a fresh forward")
{
    Rng rng(1);
    MeshConv conv(1, 1, pdo(1), "c", rng);
    const MeshSignal g(1, 1, 1, 1.0);
    CHECK_THROWS_AS(conv.backward(g), StateError);
    conv.forward(MeshSignal(1, 1, 1, 1.0), Mode::train);
    conv.theta().mutable_value()[0] += 0.1;
    CHECK_THROWS_AS(conv.backward(g), StateError);

    BatchNorm bn(1, "bn");
    CHECK_THROWS_AS(bn.backward(g), StateError);
    Conv1x1 lin(1, 1, "l", rng);
    lin.forward(g, Mode::train);
    lin.bias().mutable_value()[0] = 1.0;
    CHECK_THROWS_AS(lin.backward(g), StateError);
}

TEST_CASE("backward is linear in the upstream gradient")
{
    Rng rng(6);
    ResBlock block(2, 2, 3, pdo(1), "rb", rng);
    const MeshSignal x = random_signal(1, 2, 2, 1);
    const MeshSignal g = random_signal(1, 2, 3, 2);
    block.forward(x, Mode::train);
    const MeshSignal a = block.backward(g);
    MeshSignal g2 = g;
    g2 *= -2.5;
    block.forward(x, Mode::train);
    MeshSignal b = block.backward(g2);
    MeshSignal want = a;
    want *= -2.5;
    CHECK(oracle::max_rel_error(b.values(), want.values()) < 1e-13);
}

TEST_CASE("adjoint dot-product identity on linearised layers")
{
    Rng rng(8);
    OperatorBank bank(2);
    auto ops = bank.pdo(2);
    auto check = [](Module& m, const MeshSignal& x) {
        m.set_linearized(true);
        const MeshSignal y = m.forward(x, Mode::train);
        const MeshSignal g = random_signal(y.level(), y.batch(), y.channels(), 77);
        const MeshSignal gx = m.backward(g);
        const double lhs = dot(g, y), rhs = dot(gx, x);
        m.set_linearized(false);
        return std::abs(lhs - rhs) / std::max(std::abs(lhs), 1.0);
    };
    const MeshSignal x = random_signal(2, 2, 3, 5);
    MeshConv mc(3, 2, ops, "m", rng, StencilUnits::raw);
    CHECK(check(mc, x) < 1e-10);
    Conv1x1 lin(3, 2, "l", rng);
    CHECK(check(lin, x) < 1e-10);
    Transition down(bank.down(2, DownMode::average));
    CHECK(check(down, x) < 1e-10);
    Transition up(bank.up(2, UpMode::bilinear));
    CHECK(check(up, random_signal(1, 2, 3, 6)) < 1e-10);
    ResBlock rb(3, 2, 4, ops, "rb", rng, false, StencilUnits::mesh);
    CHECK(check(rb, x) < 1e-10);
    DownBlock db(3, 3, 2, ResampleSpec{}, bank, 2, "d", rng);
    CHECK(check(db, x) < 1e-10);
}

TEST_CASE("down-block receptive fields match the ablation table")
{
    const int fine = 3;
    OperatorBank bank(fine);
    const IcoMesh& mesh = bank.mesh(fine);
    struct Row {
        DownMode down;
        bool swapped;
        int ring;
    };
    const Row rows[] = {{DownMode::drop, false, 2},
                        {DownMode::drop, true, 1},
                        {DownMode::average, false, 3},
                        {DownMode::average, true, 2}};
    for (const Row& r : rows) {
        Rng rng(21);
        DownBlock db(2, 2, 2, ResampleSpec{r.down, UpMode::bilinear, r.swapped}, bank, fine, "d", rng);
        const MeshSignal probe(fine, 1, 2);
        for (std::size_t v : {std::size_t{0}, std::size_t{5}, std::size_t{40}, std::size_t{150}}) {
            CAPTURE(v);
            CAPTURE(r.swapped);
            CHECK(support_ring(db, probe, mesh, v) == r.ring);
        }
        if (r.swapped) {
            // MeshConv first: the support is the whole ring
            const auto support = impulse_support(db, probe, 40);
            CHECK(support == oracle::bfs_ring(mesh, 40, r.ring));
        }
    }
}

} // TEST_SUITE
