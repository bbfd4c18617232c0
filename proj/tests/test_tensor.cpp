#include <doctest.h>

#include <cmath>

#include "siedd/tensor.hpp"

using siedd::Tensor2D;

TEST_SUITE("tensor") {

TEST_CASE("construction and element access") {
    Tensor2D t(3, 4, 2.5f);
    CHECK(t.rows() == 3);
    CHECK(t.cols() == 4);
    CHECK(t.size() == 12);
    CHECK_FALSE(t.empty());
    CHECK(t.at(2, 3) == 2.5f);

    t.at(1, 2) = -7.0f;
    CHECK(t.row(1)[2] == -7.0f);
    CHECK(t.data()[1 * 4 + 2] == -7.0f);

    Tensor2D empty;
    CHECK(empty.empty());
    CHECK(empty.rows() == 0);
}

TEST_CASE("from validates data length") {
    auto t = Tensor2D::from(2, 2, {1.0f, 2.0f, 3.0f, 4.0f});
    CHECK(t.at(1, 0) == 3.0f);
    CHECK_THROWS_AS(Tensor2D::from(2, 2, {1.0f, 2.0f}), siedd::ShapeError);
}

TEST_CASE("shape helpers and equality") {
    Tensor2D a(2, 3, 1.0f);
    Tensor2D b(2, 3, 1.0f);
    Tensor2D c(3, 2, 1.0f);
    CHECK(a.same_shape(b));
    CHECK_FALSE(a.same_shape(c));
    CHECK(a == b);
    b.at(0, 0) = 0.0f;
    CHECK_FALSE(a == b);

    CHECK_NOTHROW(siedd::require_shape(a, 2, 3, "test"));
    CHECK_THROWS_AS(siedd::require_shape(a, 3, 2, "test"), siedd::ShapeError);
}

TEST_CASE("all_finite flags NaN and infinity") {
    Tensor2D t(2, 2, 0.0f);
    CHECK(t.all_finite());
    t.at(0, 1) = std::nanf("");
    CHECK_FALSE(t.all_finite());
    t.at(0, 1) = 0.0f;
    t.at(1, 1) = INFINITY;
    CHECK_FALSE(t.all_finite());
}

TEST_CASE("fill overwrites every element") {
    Tensor2D t(4, 4, 1.0f);
    t.fill(-3.0f);
    for (std::size_t i = 0; i < t.size(); ++i) CHECK(t.data()[i] == -3.0f);
}

}  // TEST_SUITE
