#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "mcf/ops.hpp"
#include "mcf/rng.hpp"
#include "mcf/tensor.hpp"

using namespace mcf;

TEST_CASE("zeros and full construction") {
    Tensor z = Tensor::zeros({2, 3});
    REQUIRE(z.shape() == Shape{2, 3});
    REQUIRE(z.numel() == 6);
    for (double v : z.data()) CHECK(v == 0.0);

    Tensor f = Tensor::full({1}, 5.0);
    CHECK(f.value() == 5.0);
}

TEST_CASE("invalid dimensions are rejected") {
    CHECK_THROWS_AS(Tensor::zeros({2, 0}), InvalidShape);
    CHECK_THROWS_AS(Tensor::zeros(std::initializer_list<long long>{-1}), InvalidShape);
    CHECK_THROWS_AS(Tensor::full({0}, 1.0), InvalidShape);
}

TEST_CASE("seeded construction is bit-reproducible") {
    Tensor a = Tensor::seeded_normal({4}, 7);
    Tensor b = Tensor::seeded_normal({4}, 7);
    REQUIRE(a.numel() == b.numel());
    for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a.data()[i] == b.data()[i]);
    // First draw equals the raw sampler stream.
    NormalSampler s(7);
    CHECK(a.data()[0] == s.next());
}

TEST_CASE("element access round-trips and validates indices") {
    Tensor t = Tensor::zeros({2, 3});
    t.set({1, 2}, 42.0);
    CHECK(t.at({1, 2}) == 42.0);
    CHECK(t.at({0, 0}) == 0.0);
    CHECK_THROWS_AS(t.at({2, 0}), ShapeError);
    CHECK_THROWS_AS(t.at({0, 0, 0}), ShapeError);
}

TEST_CASE("value() requires a scalar") {
    Tensor t = Tensor::zeros({2});
    CHECK_THROWS_AS(t.value(), NotScalar);
}

TEST_CASE("reshape shares data and keeps the original shape intact") {
    Tensor t = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor v = t.reshape({3, 2});
    CHECK(t.shape() == Shape{2, 3});
    CHECK(v.shape() == Shape{3, 2});
    CHECK(v.same_storage(t));
    v.data()[0] = 99.0;
    CHECK(t.data()[0] == 99.0);
    CHECK_THROWS_AS(t.reshape({4, 2}), ShapeError);
}

TEST_CASE("matmul identity is bitwise exact") {
    Tensor a = Tensor::from_data({2, 2}, {1.5, -2.25, 3.0, 0.125});
    Tensor eye = Tensor::from_data({2, 2}, {1, 0, 0, 1});
    Tensor left = matmul(eye, a);
    Tensor right = matmul(a, eye);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(left.data()[i] == a.data()[i]);
        CHECK(right.data()[i] == a.data()[i]);
    }
}

TEST_CASE("matmul hand oracle") {
    Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
    Tensor b = Tensor::from_data({2, 1}, {1, 1});
    Tensor c = matmul(a, b);
    REQUIRE(c.shape() == Shape{2, 1});
    CHECK(c.data()[0] == 3.0);
    CHECK(c.data()[1] == 7.0);
}

TEST_CASE("matmul rejects mismatched inner dims") {
    Tensor a = Tensor::zeros({2, 3});
    Tensor b = Tensor::zeros({4, 2});
    CHECK_THROWS_AS(matmul(a, b), ShapeError);
}

TEST_CASE("batched matmul broadcasts leading dims") {
    // a: [2,2,3], b: [3,2] -> out [2,2,2]; checked against per-batch loops.
    Tensor a = Tensor::seeded_normal({2, 2, 3}, 11);
    Tensor b = Tensor::seeded_normal({3, 2}, 12);
    Tensor c = matmul(a, b);
    REQUIRE(c.shape() == Shape{2, 2, 2});
    for (std::size_t g = 0; g < 2; ++g)
        for (std::size_t i = 0; i < 2; ++i)
            for (std::size_t j = 0; j < 2; ++j) {
                double acc = 0.0;
                for (std::size_t k = 0; k < 3; ++k)
                    acc += a.at({g, i, k}) * b.at({k, j});
                CHECK(c.at({g, i, j}) == Catch::Approx(acc).margin(1e-14));
            }
}

TEST_CASE("matmul_nt equals matmul against the explicit transpose") {
    Tensor a = Tensor::seeded_normal({3, 2, 4}, 21);
    Tensor b = Tensor::seeded_normal({3, 5, 4}, 22);
    Tensor direct = matmul_nt(a, b);
    Tensor via_t = matmul(a, transpose_last2(b));
    REQUIRE(direct.shape() == via_t.shape());
    for (std::size_t i = 0; i < direct.numel(); ++i)
        CHECK(direct.data()[i] == Catch::Approx(via_t.data()[i]).margin(1e-14));
}

TEST_CASE("softmax of a constant slice is uniform") {
    Tensor x = Tensor::zeros({3});
    Tensor y = softmax(x, 0);
    for (double v : y.data()) CHECK(v == Catch::Approx(1.0 / 3.0).margin(1e-15));
}

TEST_CASE("softmax survives large inputs") {
    Tensor x = Tensor::from_data({2}, {1000.0, 0.0});
    Tensor y = softmax(x, 0);
    CHECK(std::isfinite(y.data()[0]));
    CHECK(std::isfinite(y.data()[1]));
    CHECK(y.data()[0] + y.data()[1] == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("softmax closed form [ln2, 0]") {
    Tensor x = Tensor::from_data({2}, {std::log(2.0), 0.0});
    Tensor y = softmax(x, 0);
    CHECK(y.data()[0] == Catch::Approx(2.0 / 3.0).margin(1e-12));
    CHECK(y.data()[1] == Catch::Approx(1.0 / 3.0).margin(1e-12));
}

TEST_CASE("softmax slices sum to 1 within 1e-12 across axes and magnitudes") {
    NormalSampler mag(55);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor x = Tensor::seeded_normal({3, 4, 5}, 100 + trial);
        // scale entries up to |x| ~ 1e6
        const double c = std::pow(10.0, 6.0 * mag.unit_open_closed());
        for (double& v : x.data()) v *= c;
        for (std::size_t axis = 0; axis < 3; ++axis) {
            Tensor y = softmax(x, axis);
            const Shape& s = x.shape();
            // sum along `axis` for every complementary index
            for (std::size_t i = 0; i < 3; ++i)
                for (std::size_t j = 0; j < 4; ++j)
                    for (std::size_t k = 0; k < 5; ++k) {
                        if ((axis == 0 && i != 0) || (axis == 1 && j != 0) ||
                            (axis == 2 && k != 0))
                            continue;
                        double sum = 0.0;
                        for (std::size_t a = 0; a < s[axis]; ++a) {
                            std::vector<std::size_t> idx = {i, j, k};
                            idx[axis] = a;
                            sum += y.at({idx[0], idx[1], idx[2]});
                        }
                        CHECK(sum == Catch::Approx(1.0).margin(1e-12));
                    }
        }
    }
}

TEST_CASE("softmax validates the axis") {
    Tensor x = Tensor::zeros({2, 2});
    CHECK_THROWS_AS(softmax(x, 2), ShapeError);
}

TEST_CASE("layer_norm constant slice collapses to beta") {
    Tensor x = Tensor::full({4}, 3.0);
    Tensor gamma = Tensor::full({4}, 1.0);
    Tensor beta = Tensor::zeros({4});
    Tensor y = layer_norm(x, 0, gamma, beta, 1e-5);
    for (double v : y.data()) CHECK(v == 0.0);
}

TEST_CASE("layer_norm two-point slice is exactly [-1, 1]") {
    Tensor x = Tensor::from_data({2}, {1.0, 3.0});
    Tensor gamma = Tensor::full({2}, 1.0);
    Tensor beta = Tensor::zeros({2});
    Tensor y = layer_norm(x, 0, gamma, beta, 0.0);
    CHECK(y.data()[0] == Catch::Approx(-1.0).margin(1e-14));
    CHECK(y.data()[1] == Catch::Approx(1.0).margin(1e-14));
}

TEST_CASE("layer_norm with gamma 0 returns beta") {
    Tensor x = Tensor::seeded_normal({3, 4}, 5);
    Tensor gamma = Tensor::zeros({4});
    Tensor beta = Tensor::full({4}, 5.0);
    Tensor y = layer_norm(x, 1, gamma, beta);
    for (double v : y.data()) CHECK(v == 5.0);
}

TEST_CASE("layer_norm normalizes to mean 0 variance 1 before affine") {
    Tensor x = Tensor::seeded_normal({6, 9}, 31);
    Tensor gamma = Tensor::full({9}, 1.0);
    Tensor beta = Tensor::zeros({9});
    Tensor y = layer_norm(x, 1, gamma, beta, 1e-12);
    for (std::size_t r = 0; r < 6; ++r) {
        double mu = 0.0, var = 0.0;
        for (std::size_t j = 0; j < 9; ++j) mu += y.at({r, j});
        mu /= 9.0;
        for (std::size_t j = 0; j < 9; ++j) var += (y.at({r, j}) - mu) * (y.at({r, j}) - mu);
        var /= 9.0;
        CHECK(std::fabs(mu) < 1e-10);
        CHECK(std::fabs(var - 1.0) < 1e-10);
    }
}

TEST_CASE("layer_norm works on a non-terminal axis") {
    Tensor x = Tensor::seeded_normal({5, 3}, 77);
    Tensor gamma = Tensor::full({5}, 2.0);
    Tensor beta = Tensor::full({5}, -1.0);
    Tensor y = layer_norm(x, 0, gamma, beta, 0.0);
    for (std::size_t col = 0; col < 3; ++col) {
        double mu = 0.0, var = 0.0;
        for (std::size_t r = 0; r < 5; ++r) mu += x.at({r, col});
        mu /= 5.0;
        for (std::size_t r = 0; r < 5; ++r) var += (x.at({r, col}) - mu) * (x.at({r, col}) - mu);
        var /= 5.0;
        for (std::size_t r = 0; r < 5; ++r) {
            const double want = 2.0 * (x.at({r, col}) - mu) / std::sqrt(var) - 1.0;
            CHECK(y.at({r, col}) == Catch::Approx(want).margin(1e-12));
        }
    }
}

TEST_CASE("layer_norm rejects mismatched gamma/beta") {
    Tensor x = Tensor::zeros({2, 3});
    Tensor g2 = Tensor::full({2}, 1.0);
    Tensor b3 = Tensor::zeros({3});
    CHECK_THROWS_AS(layer_norm(x, 1, g2, b3), ShapeError);
}

TEST_CASE("elementwise basics") {
    Tensor x = Tensor::from_data({2}, {-1.0, 2.0});
    Tensor r = relu(x);
    CHECK(r.data()[0] == 0.0);
    CHECK(r.data()[1] == 2.0);

    Tensor z = Tensor::zeros({2});
    Tensor s = add(x, z);
    CHECK(s.data()[0] == x.data()[0]);
    CHECK(s.data()[1] == x.data()[1]);

    CHECK(gelu(Tensor::zeros({1})).value() == 0.0);
}

TEST_CASE("gelu matches the tanh approximation closed form") {
    // Reference values computed independently from
    // 0.5*x*(1 + tanh(sqrt(2/pi)*(x + 0.044715*x^3))).
    Tensor x = Tensor::from_data({5}, {-2.0, -0.5, 0.5, 1.0, 3.0});
    Tensor y = gelu(x);
    CHECK(y.data()[0] == Catch::Approx(-0.04540230591222494).margin(1e-15));
    CHECK(y.data()[1] == Catch::Approx(-0.15428599017485606).margin(1e-15));
    CHECK(y.data()[2] == Catch::Approx(0.34571400982514394).margin(1e-15));
    CHECK(y.data()[3] == Catch::Approx(0.8411919906082768).margin(1e-15));
    CHECK(y.data()[4] == Catch::Approx(2.996362607918227).margin(1e-15));
}

TEST_CASE("broadcasting follows trailing alignment") {
    Tensor a = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor row = Tensor::from_data({3}, {10, 20, 30});
    Tensor col = Tensor::from_data({2, 1}, {100, 200});
    Tensor s1 = add(a, row);
    CHECK(s1.at({0, 0}) == 11.0);
    CHECK(s1.at({1, 2}) == 36.0);
    Tensor s2 = add(a, col);
    CHECK(s2.at({0, 2}) == 103.0);
    CHECK(s2.at({1, 0}) == 204.0);
    Tensor bad = Tensor::zeros({4});
    CHECK_THROWS_AS(add(a, bad), ShapeError);
}

TEST_CASE("scale and shift") {
    Tensor x = Tensor::from_data({3}, {1, -2, 3});
    Tensor y = scale(x, -2.0);
    CHECK(y.data()[0] == -2.0);
    CHECK(y.data()[1] == 4.0);
    CHECK(y.data()[2] == -6.0);
    Tensor z = shift(x, 1.5);
    CHECK(z.data()[0] == 2.5);
}

TEST_CASE("take gathers by index table") {
    Tensor x = Tensor::from_data({4}, {10, 11, 12, 13});
    auto table = std::make_shared<const std::vector<std::size_t>>(
        std::vector<std::size_t>{3, 0, 0, 2});
    Tensor y = take(x, table, {2, 2});
    CHECK(y.at({0, 0}) == 13.0);
    CHECK(y.at({0, 1}) == 10.0);
    CHECK(y.at({1, 0}) == 10.0);
    CHECK(y.at({1, 1}) == 12.0);

    auto oob = std::make_shared<const std::vector<std::size_t>>(std::vector<std::size_t>{4});
    CHECK_THROWS_AS(take(x, oob, {1}), ShapeError);
}

TEST_CASE("permute rearranges axes") {
    Tensor x = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor y = permute(x, {1, 0});
    REQUIRE(y.shape() == Shape{3, 2});
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 3; ++j) CHECK(y.at({j, i}) == x.at({i, j}));
    CHECK_THROWS_AS(permute(x, {0, 0}), ShapeError);

    Tensor z = Tensor::seeded_normal({2, 3, 4}, 9);
    Tensor w = permute(z, {2, 0, 1});
    REQUIRE(w.shape() == Shape{4, 2, 3});
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            for (std::size_t k = 0; k < 4; ++k) CHECK(w.at({k, i, j}) == z.at({i, j, k}));
}

TEST_CASE("sum_all and mean_all") {
    Tensor x = Tensor::from_data({2, 2}, {1, 2, 3, 4});
    CHECK(sum_all(x).value() == 10.0);
    CHECK(mean_all(x).value() == 2.5);
}
