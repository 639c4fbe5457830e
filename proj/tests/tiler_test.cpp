#include <gtest/gtest.h>

#include "phenokit/error.hpp"
#include "phenokit/random.hpp"
#include "phenokit/tiler.hpp"

namespace phenokit::tiler {
namespace {

TEST(PlanTilesTest, ExactTileGivesOneTile) {
    const auto g = plan_tiles({384, 384}, 384, 0.2);
    ASSERT_EQ(g.tiles.size(), 1u);
    EXPECT_EQ(g.tiles[0], (TileSpec{0, 0, 0, 0, 384, 384}));
}

TEST(PlanTilesTest, LastOffsetIsClampedToEdge) {
    // stride 307, second offset clamped to 768 - 384
    EXPECT_EQ(axis_offsets(768, 384, 0.2), (std::vector<int>{0, 307, 384}));
    const auto g = plan_tiles({768, 768}, 384, 0.2);
    ASSERT_EQ(g.tiles.size(), 9u);
    EXPECT_EQ(axis_offsets(500, 384, 0.2), (std::vector<int>{0, 116}));
    const auto h = plan_tiles({500, 500}, 384, 0.2);
    ASSERT_EQ(h.tiles.size(), 4u);
    EXPECT_EQ(h.tiles[1], (TileSpec{0, 1, 116, 0, 384, 384}));
    EXPECT_EQ(h.tiles[2], (TileSpec{1, 0, 0, 116, 384, 384}));
}

TEST(PlanTilesTest, SmallImageGetsOneShrunkenTile) {
    const auto g = plan_tiles({100, 50}, 384, 0.2);
    ASSERT_EQ(g.tiles.size(), 1u);
    EXPECT_EQ(g.tiles[0], (TileSpec{0, 0, 0, 0, 100, 50}));
}

TEST(PlanTilesTest, InvalidParameters) {
    EXPECT_THROW(plan_tiles({100, 100}, 0, 0.2), Error);
    EXPECT_THROW(plan_tiles({100, 100}, 384, 1.0), Error);
    EXPECT_THROW(plan_tiles({100, 100}, 384, -0.1), Error);
    EXPECT_THROW(plan_tiles({0, 100}, 384, 0.2), Error);
}

TEST(PlanTilesTest, CoverageAndOverlapProperty) {
    Rng rng(17);
    for (int trial = 0; trial < 200; ++trial) {
        const ImageDims dims{1 + static_cast<int>(rng.below(3000)), 1 + static_cast<int>(rng.below(3000))};
        const int tile = 16 + static_cast<int>(rng.below(600));
        const double overlap = rng.uniform(0.0, 0.9);
        const auto g = plan_tiles(dims, tile, overlap);
        const int stride = static_cast<int>(tile * (1.0 - overlap));
        const int min_overlap = static_cast<int>(overlap * tile);
        for (int axis = 0; axis < 2; ++axis) {
            const int extent = axis == 0 ? dims.width : dims.height;
            const auto offs = axis_offsets(extent, tile, overlap);
            // Contiguous cover of [0, extent) with no gap and no tile past the edge.
            EXPECT_EQ(offs.front(), 0);
            const int t = std::min(tile, extent);
            EXPECT_EQ(offs.back() + t, extent);
            for (std::size_t i = 1; i < offs.size(); ++i) {
                EXPECT_GT(offs[i], offs[i - 1]);
                EXPECT_LE(offs[i] - offs[i - 1], stride);
                EXPECT_GE(t - (offs[i] - offs[i - 1]), min_overlap);
            }
        }
        // Row-major order.
        for (std::size_t i = 1; i < g.tiles.size(); ++i) {
            const auto& a = g.tiles[i - 1];
            const auto& b = g.tiles[i];
            EXPECT_TRUE(a.row < b.row || (a.row == b.row && a.col + 1 == b.col));
        }
        // Each sampled pixel lies in at least one tile.
        for (int k = 0; k < 20; ++k) {
            const int x = static_cast<int>(rng.below(dims.width)), y = static_cast<int>(rng.below(dims.height));
            bool covered = false;
            for (const auto& s : g.tiles)
                covered |= x >= s.ox && x < s.ox + s.width && y >= s.oy && y < s.oy + s.height;
            EXPECT_TRUE(covered);
        }
    }
}

TEST(ClipAnnotationsTest, VisibilityThreshold) {
    const TileSpec tile{0, 0, 0, 0, 384, 384};
    // 60% of a 10x10 box inside the tile: kept and clipped.
    const std::vector<BBox> kept{BBox(378, 100, 388, 110, 1)};
    const auto a = clip_annotations(kept, tile, 0.5);
    ASSERT_EQ(a.size(), 1u);
    EXPECT_EQ(a[0], BBox(378, 100, 384, 110, 1));
    // 40% visible: dropped.
    const std::vector<BBox> dropped{BBox(380, 100, 390, 110)};
    EXPECT_TRUE(clip_annotations(dropped, tile, 0.5).empty());
}

TEST(ClipAnnotationsTest, ConvertsToTileLocalCoordinates) {
    const TileSpec tile{1, 1, 307, 307, 384, 384};
    const std::vector<BBox> boxes{BBox(400, 500, 420, 530, 0), BBox(10, 10, 20, 20)};
    const auto out = clip_annotations(boxes, tile);
    ASSERT_EQ(out.size(), 1u);
    EXPECT_EQ(out[0], BBox(93, 193, 113, 223, 0));
    EXPECT_THROW(clip_annotations(boxes, tile, 0.0), Error);
    EXPECT_THROW(clip_annotations(boxes, tile, 1.5), Error);
}

TEST(FilterEmptyTest, DropsTilesWithoutAnnotations) {
    const auto g = plan_tiles({500, 500}, 384, 0.2);
    const std::vector<std::vector<BBox>> none(4);
    EXPECT_TRUE(filter_empty(g, none).tiles.empty());
    std::vector<std::vector<BBox>> one(4);
    one[2].push_back(BBox(1, 1, 5, 5));
    const auto f = filter_empty(g, one);
    ASSERT_EQ(f.tiles.size(), 1u);
    EXPECT_EQ(f.tiles[0], g.tiles[2]);
    const std::vector<std::vector<BBox>> wrong(3);
    EXPECT_THROW(filter_empty(g, wrong), Error);
}

TEST(TileToGlobalTest, OffsetsBox) {
    const TileSpec tile{1, 2, 614, 307, 384, 384};
    const auto d = tile_to_global(Detection(BBox(10, 20, 30, 40, 1), 0.8), tile);
    EXPECT_EQ(d.box(), BBox(624, 327, 644, 347, 1));
    EXPECT_DOUBLE_EQ(d.confidence(), 0.8);
    EXPECT_THROW(tile_to_global(Detection(BBox(370, 0, 390, 10), 0.8), tile), Error);
}

TEST(TileToGlobalTest, ClipThenMapRoundTrips) {
    Rng rng(23);
    const auto g = plan_tiles({2000, 1500});
    for (int i = 0; i < 500; ++i) {
        const auto& tile = g.tiles[rng.below(g.tiles.size())];
        const double x = tile.ox + rng.uniform(0, tile.width - 30);
        const double y = tile.oy + rng.uniform(0, tile.height - 30);
        const BBox box(x, y, x + rng.uniform(1, 29), y + rng.uniform(1, 29), static_cast<int>(rng.below(2)));
        const std::vector<BBox> in{box};
        const auto local = clip_annotations(in, tile);
        ASSERT_EQ(local.size(), 1u);
        const auto back = tile_to_global(Detection(local[0], 1.0), tile).box();
        EXPECT_NEAR(back.x_min(), box.x_min(), 1e-9);
        EXPECT_NEAR(back.y_min(), box.y_min(), 1e-9);
        EXPECT_NEAR(back.x_max(), box.x_max(), 1e-9);
        EXPECT_NEAR(back.y_max(), box.y_max(), 1e-9);
        EXPECT_EQ(back.class_id(), box.class_id());
    }
}

TEST(TileNamingTest, KeysAndFileNames) {
    const TileSpec tile{3, 4, 921, 1116, 384, 384};
    EXPECT_EQ(tile_key("root_07", tile), "root_07#r3c4");
    EXPECT_EQ(tile_file_name("root_07", tile, ".png"), "root_07_r3_c4.png");
}

TEST(CropTileTest, CopiesRegion) {
    cv::Mat img(10, 12, CV_8UC1);
    for (int y = 0; y < 10; ++y)
        for (int x = 0; x < 12; ++x) img.at<uchar>(y, x) = static_cast<uchar>(y * 12 + x);
    const cv::Mat c = crop_tile(img, {0, 1, 5, 2, 4, 3});
    ASSERT_EQ(c.size(), cv::Size(4, 3));
    EXPECT_EQ(c.at<uchar>(0, 0), 2 * 12 + 5);
    EXPECT_EQ(c.at<uchar>(2, 3), 4 * 12 + 8);
}


TEST(PlanTilesTest, ReferenceGrids) {
    const auto g = plan_tiles({768, 384}, 384, 0.5);
    ASSERT_EQ(g.tiles.size(), 3u);
    EXPECT_EQ(g.tiles[0].ox, 0);
    EXPECT_EQ(g.tiles[1].ox, 192);
    EXPECT_EQ(g.tiles[2].ox, 384);
    for (const auto& t : g.tiles) EXPECT_EQ(t.row, 0);

    const auto h = plan_tiles({500, 384}, 384, 0.0);
    ASSERT_EQ(h.tiles.size(), 2u);
    EXPECT_EQ(h.tiles[0].ox, 0);
    EXPECT_EQ(h.tiles[1].ox, 116);
}

TEST(PlanTilesTest, IsDeterministic) {
    const auto a = plan_tiles({1999, 1333}, 384, 0.2);
    const auto b = plan_tiles({1999, 1333}, 384, 0.2);
    EXPECT_EQ(a.tiles, b.tiles);
}

TEST(ClipAnnotationsTest, HalfInsideBox) {
    const TileSpec tile{0, 0, 0, 0, 384, 384};
    const std::vector<BBox> half{BBox(374, 50, 394, 70)};
    EXPECT_TRUE(clip_annotations(half, tile, 0.6).empty());
    const auto kept = clip_annotations(half, tile, 0.4);
    ASSERT_EQ(kept.size(), 1u);
    EXPECT_EQ(kept[0], BBox(374, 50, 384, 70));
}

TEST(FilterEmptyTest, KeepsAllOrSelectedTilesInOrder) {
    const auto g = plan_tiles({1612, 500}, 384, 0.2);
    ASSERT_EQ(g.tiles.size(), 10u);
    std::vector<std::vector<BBox>> all(10, std::vector<BBox>{BBox(0, 0, 1, 1)});
    EXPECT_EQ(filter_empty(g, all).tiles, g.tiles);
    std::vector<std::vector<BBox>> some(10);
    for (int i : {1, 4, 8}) some[i].push_back(BBox(0, 0, 1, 1));
    const auto f = filter_empty(g, some);
    EXPECT_EQ(f.tiles, (std::vector<TileSpec>{g.tiles[1], g.tiles[4], g.tiles[8]}));
}

TEST(TileToGlobalTest, ReferenceOffsets) {
    const TileSpec right{0, 1, 384, 0, 384, 384};
    EXPECT_EQ(tile_to_global(Detection(BBox(10, 10, 40, 40), 0.9), right).box(), BBox(394, 10, 424, 40));
    const TileSpec origin{0, 0, 0, 0, 384, 384};
    EXPECT_EQ(tile_to_global(Detection(BBox(10, 10, 40, 40), 0.9), origin).box(), BBox(10, 10, 40, 40));
}

TEST(PlanTilesTest, SmallBoxesAppearUncutSomewhere) {
    Rng rng(31);
    const ImageDims dims{2000, 1500};
    const auto g = plan_tiles(dims, 384, 0.2);
    for (int i = 0; i < 2000; ++i) {
        const double x = rng.uniform(0, dims.width - 36), y = rng.uniform(0, dims.height - 36);
        const BBox box(x, y, x + 36, y + 36);
        bool uncut = false;
        for (const auto& t : g.tiles)
            uncut |= x >= t.ox && y >= t.oy && x + 36 <= t.ox + t.width && y + 36 <= t.oy + t.height;
        EXPECT_TRUE(uncut) << x << "," << y;
    }
}

}  // namespace
}  // namespace phenokit::tiler
