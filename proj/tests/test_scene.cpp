#include <doctest.h>

#include <map>
#include <numeric>
#include <vector>

#include "changen/core/rng.hpp"
#include "changen/scene/masks.hpp"

using namespace changen;
using namespace changen::scene;

namespace {

SemanticMask random_mask(int h, int w, int k, Rng& rng) {
    SemanticMask m(h, w, k);
    for (size_t i = 0; i < m.data.size(); ++i)
        m.data[i] = static_cast<uint8_t>(rng.uniform_int(0, k - 1));
    return m;
}

BinaryGrid random_binary(int h, int w, double p, Rng& rng) {
    BinaryGrid g(h, w, 0);
    for (size_t i = 0; i < g.size(); ++i) g[i] = rng.bernoulli(p) ? 1 : 0;
    return g;
}

// Union-find oracle for component counting, structured nothing like the
// library's flood fill.
struct UnionFind {
    std::vector<int> parent;
    explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    int find(int a) { return parent[a] == a ? a : parent[a] = find(parent[a]); }
    void unite(int a, int b) { parent[find(a)] = find(b); }
};

int oracle_component_count(const BinaryGrid& g, int connectivity) {
    UnionFind uf(static_cast<int>(g.size()));
    int w = g.width();
    for (int y = 0; y < g.height(); ++y)
        for (int x = 0; x < w; ++x) {
            if (!g.at(y, x)) continue;
            const int dy8[] = {0, 1, 1, 1}, dx8[] = {1, -1, 0, 1};
            int limit = connectivity == 8 ? 4 : 2;
            const int dy4[] = {0, 1}, dx4[] = {1, 0};
            for (int d = 0; d < limit; ++d) {
                int ny = y + (connectivity == 8 ? dy8[d] : dy4[d]);
                int nx = x + (connectivity == 8 ? dx8[d] : dx4[d]);
                if (g.in_bounds(ny, nx) && g.at(ny, nx)) uf.unite(y * w + x, ny * w + nx);
            }
        }
    std::map<int, int> roots;
    for (int y = 0; y < g.height(); ++y)
        for (int x = 0; x < w; ++x)
            if (g.at(y, x)) roots[uf.find(y * w + x)]++;
    return static_cast<int>(roots.size());
}

}  // namespace

TEST_CASE("change_mask_of matches the definition pixel for pixel") {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        int h = rng.uniform_int(1, 16), w = rng.uniform_int(1, 16);
        SemanticMask a = random_mask(h, w, 4, rng);
        SemanticMask b = random_mask(h, w, 4, rng);
        ChangeMask c = change_mask_of(a, b);
        for (size_t i = 0; i < c.data.size(); ++i)
            CHECK(c.data[i] == (a.data[i] != b.data[i] ? 1 : 0));
    }
    SemanticMask a(4, 4, 2), b(4, 5, 2);
    CHECK_THROWS_AS(change_mask_of(a, b), DimensionError);
}

TEST_CASE("connected_components agrees with a union-find oracle") {
    Rng rng(17);
    for (int trial = 0; trial < 120; ++trial) {
        int h = rng.uniform_int(1, 32), w = rng.uniform_int(1, 32);
        double p = rng.uniform(0.2, 0.7);
        BinaryGrid g = random_binary(h, w, p, rng);
        for (int connectivity : {4, 8}) {
            InstanceMap cc = connected_components(g, connectivity);
            CHECK(static_cast<int>(cc.classes.size()) == oracle_component_count(g, connectivity));
            // support is exactly the foreground
            for (size_t i = 0; i < g.size(); ++i)
                CHECK((cc.data[i] != 0) == (g[i] != 0));
            // labels are dense 1..n and deterministic by first-pixel order
            int expect_next = 1;
            for (size_t i = 0; i < g.size(); ++i) {
                int32_t id = cc.data[i];
                if (id == expect_next) ++expect_next;
                CHECK(id <= static_cast<int32_t>(cc.classes.size()));
            }
            CHECK(expect_next == static_cast<int>(cc.classes.size()) + 1);
        }
    }
}

TEST_CASE("connected components separate diagonal pixels under 4-connectivity") {
    BinaryGrid g(2, 2, 0);
    g.at(0, 0) = 1;
    g.at(1, 1) = 1;
    CHECK(connected_components(g, 4).classes.size() == 2);
    CHECK(connected_components(g, 8).classes.size() == 1);
}

TEST_CASE("dilate matches brute-force Chebyshev expansion") {
    Rng rng(23);
    for (int trial = 0; trial < 100; ++trial) {
        int h = rng.uniform_int(1, 24), w = rng.uniform_int(1, 24);
        int radius = rng.uniform_int(0, 4);
        ChangeMask m(h, w);
        for (size_t i = 0; i < m.data.size(); ++i) m.data[i] = rng.bernoulli(0.15) ? 1 : 0;
        ChangeMask d = dilate(m, radius);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                uint8_t expect = 0;
                for (int dy = -radius; dy <= radius && !expect; ++dy)
                    for (int dx = -radius; dx <= radius; ++dx)
                        if (m.data.in_bounds(y + dy, x + dx) && m.data.at(y + dy, x + dx)) {
                            expect = 1;
                            break;
                        }
                CHECK(d.data.at(y, x) == expect);
            }
    }
    ChangeMask m(3, 3);
    CHECK_THROWS_AS(dilate(m, -1), ParameterError);
    m.data.at(1, 1) = 1;
    CHECK(dilate(m, 0).data == m.data);
}

TEST_CASE("extract_contours matches the boundary rule") {
    Rng rng(31);
    for (int trial = 0; trial < 100; ++trial) {
        int h = rng.uniform_int(1, 24), w = rng.uniform_int(1, 24);
        BinaryGrid g = random_binary(h, w, 0.4, rng);
        InstanceMap inst = connected_components(g, 8);
        ContourMap ct = extract_contours(inst);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                int32_t id = inst.data.at(y, x);
                uint8_t expect = 0;
                if (id != 0) {
                    for (int dy = -1; dy <= 1 && !expect; ++dy)
                        for (int dx = -1; dx <= 1; ++dx) {
                            if (dy == 0 && dx == 0) continue;
                            if (!inst.data.in_bounds(y + dy, x + dx) ||
                                inst.data.at(y + dy, x + dx) != id) {
                                expect = 1;
                                break;
                            }
                        }
                }
                CHECK(ct.data.at(y, x) == expect);
            }
    }
}

TEST_CASE("instances_of splits per class and instance_support validates ids") {
    SemanticMask m(4, 6, 3);
    // two class-1 regions, one class-2 region touching one of them
    m.data.at(0, 0) = 1;
    m.data.at(0, 1) = 1;
    m.data.at(3, 5) = 1;
    m.data.at(0, 2) = 2;
    InstanceMap inst = instances_of(m);
    CHECK(inst.classes.size() == 3);
    // same-class adjacency merges; cross-class adjacency must not
    std::map<int, int> per_class;
    for (const auto& [id, cls] : inst.classes) per_class[cls]++;
    CHECK(per_class[1] == 2);
    CHECK(per_class[2] == 1);

    BinaryGrid sup = instance_support(inst, inst.data.at(0, 0));
    CHECK(sup.at(0, 0) == 1);
    CHECK(sup.at(0, 1) == 1);
    CHECK(sup.at(0, 2) == 0);
    CHECK_THROWS_AS(instance_support(inst, 999), LookupError);
}

TEST_CASE("semantic mask validation") {
    SemanticMask m(2, 2, 2);
    m.validate();
    m.data.at(0, 0) = 5;  // out of range for k=2
    CHECK_THROWS_AS(m.validate(), ParameterError);
    CHECK_THROWS_AS(SemanticMask(2, 2, 1), ParameterError);
}
