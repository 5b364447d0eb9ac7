#include "cimsim/analog.hpp"
#include "cimsim/error.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace cimsim;

namespace {

DeviceModel device(double ratio, double sigma = 0.0) {
    DeviceModel d;
    d.on_off_ratio = ratio;
    d.sigma_cell = sigma;
    return d;
}

std::vector<double> range_samples(int n) {
    std::vector<double> s;
    for (int i = 0; i < n; ++i) s.push_back(i);
    return s;
}

}  // namespace

TEST_CASE("digit to conductance at ratio 150") {
    Rng rng(1);
    CHECK(digit_to_cell(1, device(150), 1, rng) == doctest::Approx(1.006711).epsilon(1e-6));
    CHECK(digit_to_cell(3, device(150), 2, rng) == doctest::Approx(3.020134).epsilon(1e-6));
    CHECK(digit_to_cell(0, device(150), 2, rng) == doctest::Approx(3.0 / 149.0));
    for (int k = 1; k <= 4; ++k)
        for (int d = 0; d < (1 << k); ++d) CHECK(digit_to_cell(d, device(kInfiniteRatio), k, rng) == d);
}

TEST_CASE("digit to conductance rejects bad digits and precisions") {
    Rng rng(1);
    CHECK_THROWS_AS(digit_to_cell(4, device(150), 2, rng), DomainError);
    CHECK_THROWS_AS(digit_to_cell(-1, device(150), 2, rng), DomainError);
    CHECK_THROWS_AS(digit_to_cell(0, device(150), 5, rng), DomainError);
}

TEST_CASE("programmed arrays") {
    const QuantizedTensor zero = testutil::ints({4, 4}, std::vector<std::int32_t>(16, 0), 4);
    Rng rng(2);
    SUBCASE("zero planes are exactly zero without variation at infinite ratio") {
        for (const auto& a : program_array(decompose_weights(zero, Design::Design2, 2), device(kInfiniteRatio), rng))
            for (std::size_t r = 0; r < a.rows; ++r)
                for (std::size_t c = 0; c < a.cols; ++c) CHECK(a.g(r, c) == 0.0);
    }
    SUBCASE("finite ratio adds the offset to every cell") {
        Rng r2(2);
        const QuantizedTensor w = testutil::random_ints(r2, 8, 8, 4, Signedness::Signed);
        const DigitPlanes d = decompose_weights(w, Design::Design1, 2);
        const auto arrays = program_array(d, device(17), rng);
        REQUIRE(arrays.size() == d.planes.size());
        for (std::size_t j = 0; j < arrays.size(); ++j) {
            CHECK(arrays[j].offset == doctest::Approx(3.0 / 16.0));
            for (std::size_t e = 0; e < arrays[j].excess.size(); ++e)
                CHECK(arrays[j].excess[e] == d.planes[j].digits[e]);
        }
    }
    SUBCASE("noise is reproducible by seed") {
        Rng r2(3);
        const DigitPlanes d = decompose_weights(testutil::random_ints(r2, 16, 16, 4, Signedness::Signed), Design::Design3, 2);
        Rng a(9), b(9), c(10);
        const auto pa = program_array(d, device(10, 0.1), a);
        const auto pb = program_array(d, device(10, 0.1), b);
        const auto pc = program_array(d, device(10, 0.1), c);
        for (std::size_t j = 0; j < pa.size(); ++j) CHECK(pa[j].excess == pb[j].excess);
        CHECK(pa[0].excess != pc[0].excess);
    }
    SUBCASE("large noise never drives a conductance negative") {
        const auto arrays = program_array(decompose_weights(zero, Design::Design1, 2), device(10, 2.0), rng);
        std::size_t clamped = 0;
        for (const auto& a : arrays)
            for (std::size_t r = 0; r < a.rows; ++r)
                for (std::size_t c = 0; c < a.cols; ++c) {
                    CHECK(a.g(r, c) >= 0.0);
                    clamped += a.g(r, c) == 0.0;
                }
        CHECK(clamped > 0);
    }
}

TEST_CASE("mean cell conductance of a zero plane is the offset (2^k - 1) / (r - 1)") {
    const QuantizedTensor zero = testutil::ints({64, 64}, std::vector<std::int32_t>(64 * 64, 0), 4);
    for (double r : {10.0, 17.0, 100.0, 150.0})
        for (int k : {1, 2, 4}) {
            Rng rng(5);
            const auto arrays = program_array(decompose_weights(zero, Design::Design2, k), device(r, 0.001), rng);
            double sum = 0.0;
            std::size_t n = 0;
            for (std::size_t r0 = 0; r0 < arrays[0].rows; ++r0)
                for (std::size_t c = 0; c < arrays[0].cols; ++c, ++n) sum += arrays[0].g(r0, c);
            const double expected = ((1 << k) - 1) / (r - 1.0);
            CHECK(cell_offset(device(r), k) == doctest::Approx(expected).epsilon(1e-15));
            // sigma 0.001 sits far below the smallest offset (1/149), so nothing clamps;
            // 4096 draws give a standard error of about 1.6e-5
            CHECK(std::fabs(sum / static_cast<double>(n) - expected) < 1e-4);
        }
}

TEST_CASE("linear specs") {
    const AdcSpec one = build_linear_adc(1, 0.0, 1.0);
    CHECK(one.centers == std::vector<double>{0.0, 1.0});
    CHECK(one.refs == std::vector<double>{0.5});
    const AdcSpec two = build_linear_adc(2, 0.0, 3.0);
    CHECK(two.centers == std::vector<double>{0.0, 1.0, 2.0, 3.0});
    CHECK(two.refs == std::vector<double>{0.5, 1.5, 2.5});
    const AdcSpec three = build_linear_adc(3, -7.0, 7.0);
    CHECK(three.centers.size() == 8);
    CHECK(three.refs.size() == 7);
    CHECK(three.centers.front() == -7.0);
    CHECK(three.centers.back() == 7.0);
    CHECK(three.refs[3] == doctest::Approx(0.0));
    CHECK_THROWS_AS(build_linear_adc(0, 0.0, 1.0), DomainError);
    CHECK_THROWS_AS(build_linear_adc(2, 1.0, 1.0), DomainError);
}

TEST_CASE("conversion clamps at both ends") {
    const AdcSpec s = build_linear_adc(2, 0.0, 3.0);
    CHECK(adc_convert(1.7, s) == 2.0);
    CHECK(adc_convert(-0.3, s) == 0.0);
    CHECK(adc_convert(9.0, s) == 3.0);
    CHECK(adc_convert(0.5, s) == 1.0);  // a ref belongs to the upper bucket
}

TEST_CASE("quantile calibration on 0..15 with p = 2") {
    const auto samples = range_samples(16);
    const AdcSpec s = calibrate_nonlinear_adc(samples, 2);
    CHECK(s.refs == std::vector<double>{4.0, 8.0, 12.0});
    CHECK(s.centers == std::vector<double>{1.5, 5.5, 9.5, 13.5});
    CHECK_NOTHROW(check_adc_spec(s));
}

TEST_CASE("constant samples still give a valid spec") {
    const std::vector<double> same(100, 3.0);
    const AdcSpec s = calibrate_nonlinear_adc(same, 3);
    CHECK_NOTHROW(check_adc_spec(s));
    for (double c : s.centers) CHECK(c == 3.0);
    CHECK(adc_convert(3.0, s) == 3.0);
}

TEST_CASE("two clusters map to their own centers") {
    std::vector<double> s;
    for (int i = 0; i < 50; ++i) s.push_back(0.0);
    for (int i = 0; i < 50; ++i) s.push_back(10.0);
    const AdcSpec q = calibrate_nonlinear_adc(s, 1);
    CHECK(adc_convert(0.0, q) == 0.0);
    CHECK(adc_convert(10.0, q) == 10.0);
    const AdcSpec f = fit_adc(s, 1);
    CHECK(adc_convert(0.0, f) == 0.0);
    CHECK(adc_convert(10.0, f) == 10.0);
}

TEST_CASE("too few samples for the level count") {
    const auto samples = range_samples(7);
    CHECK_THROWS_AS(calibrate_nonlinear_adc(samples, 3), DomainError);
    CHECK_THROWS_AS(fit_adc(std::vector<double>{}, 3), DomainError);
}

TEST_CASE("conversion is monotone and identity on integer centers") {
    Rng rng(8);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> samples(500);
        for (auto& v : samples) v = rng.normal() * 10.0;
        const AdcSpec s = calibrate_nonlinear_adc(samples, 1 + trial % 6);
        check_adc_spec(s);
        std::vector<double> xs(200);
        for (auto& v : xs) v = rng.normal() * 15.0;
        std::sort(xs.begin(), xs.end());
        for (std::size_t i = 1; i < xs.size(); ++i) CHECK(adc_convert(xs[i - 1], s) <= adc_convert(xs[i], s));
    }
    for (int p = 1; p <= 6; ++p) {
        const double hi = (1 << p) - 1;
        const AdcSpec s = build_linear_adc(p, 0.0, hi);
        for (int v = 0; v <= hi; ++v) CHECK(adc_convert(v, s) == v);
    }
}

TEST_CASE("fit_adc is lossless when the samples fit in 2^p levels") {
    const std::vector<double> s{0.0, 2.0, 2.0, 5.0, 7.5};
    const AdcSpec f = fit_adc(s, 2);
    CHECK_NOTHROW(check_adc_spec(f));
    CHECK(f.centers.size() == 4);
    for (double v : s) CHECK(adc_convert(v, f) == v);
    const AdcSpec g = fit_adc(s, 4);
    for (double v : s) CHECK(adc_convert(v, g) == v);
    // more distinct values than levels falls back to quantiles
    CHECK(fit_adc(range_samples(16), 2) == calibrate_nonlinear_adc(range_samples(16), 2));
}

TEST_CASE("spec validation and serialization") {
    CHECK_THROWS_AS(check_adc_spec({{1.0, 1.0}, {0.0, 1.0, 2.0}}), DomainError);
    CHECK_THROWS_AS(check_adc_spec({{1.0}, {0.0}}), DomainError);
    CHECK_THROWS_AS(check_adc_spec({{1.0}, {2.0, 1.0}}), DomainError);
    const AdcSpec s = build_linear_adc(3, -1.0, 6.0);
    CHECK(adc_spec_from_json(to_json(s)) == s);
    CHECK_THROWS_AS(adc_spec_from_json(json{{"refs", {1.0}}}), FormatError);
    CHECK_THROWS_AS(adc_spec_from_json(json{{"refs", {2.0, 1.0}}, {"centers", {0.0, 1.0, 2.0}}}), DomainError);
    testutil::TempDir dir;
    testutil::spit(dir / "adc.json", to_json(s).dump());
    CHECK(load_adc_spec(dir / "adc.json") == s);
    CHECK_THROWS_AS(load_adc_spec(dir / "missing.json"), FormatError);
}
