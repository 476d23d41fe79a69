#include <doctest.h>

#include <filesystem>
#include <sstream>

#include "fairaug/experiments.hpp"
#include "helpers.hpp"

using namespace fairaug;

namespace {

// Small random-corpus experiment; runs in well under a second per model.
ExperimentConfig tiny_config(const std::string& out_dir) {
  return parse_config(R"({
    "seed": 5,
    "threads": 2,
    "output_dir": ")" + out_dir + R"(",
    "dataset": {"name": "tiny", "synthetic": "random", "k_core": 5,
                "random": {"users": 40, "items": 30, "min_per_user": 6, "max_per_user": 12}},
    "models": [{"kind": "lightgcn", "embedding_size": 8, "layers": 2, "train_epochs": 5, "batch_size": 128}],
    "augmentation": {"max_epochs": 6, "learning_rate": 0.1, "tau": 0.05},
    "grid": {"user_policies": ["ZN", "LD"], "item_policies": ["IT"]}
  })");
}

}  // namespace

TEST_SUITE("experiments") {
  TEST_CASE("config parsing and defaults") {
    const auto c = parse_config(
        R"({"seed": 9, "dataset": {"synthetic": "planted_bias"}, "models": [{"kind": "svdgcn", "svd_rank": 4}]})");
    CHECK(c.seed == 9);
    REQUIRE(c.models.size() == 1);
    CHECK(c.models[0].kind == ModelKind::kSvdGcn);
    CHECK(c.models[0].svd_rank == 4);
    CHECK(c.models[0].seed == 9);
    CHECK(c.augmentation.beta == 0.5);
    CHECK(c.grid.psi_user == 0.35);
    CHECK(c.grid.psi_item == 0.20);
  }

  TEST_CASE("unknown keys and bad values are config errors") {
    CHECK_THROWS_AS(parse_config(R"({"sed": 1})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"augmentation": {"tua": 0.1}})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"models": [{"kind": "transformer"}]})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"grid": {"user_policies": ["XX"]}})"), ConfigError);
    CHECK_THROWS_AS(parse_config("{not json"), ConfigError);
    CHECK_THROWS_AS(parse_config("{}"), ConfigError);  // no data source
    try {
      parse_config(R"({"dataset": {"kcore": 3}})");
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("dataset.kcore") != std::string::npos);
    }
  }

  TEST_CASE("config hash tracks every field and is stable") {
    const std::string text = R"({"seed": 1, "dataset": {"synthetic": "planted_bias"}})";
    const auto a = parse_config(text);
    const auto b = parse_config(text);
    CHECK(config_hash(a) == config_hash(b));
    CHECK(config_hash(a).size() == 16);
    auto c = a;
    c.augmentation.tau = 0.2;
    CHECK(config_hash(c) != config_hash(a));
    auto d = a;
    d.models[0].layers = 1;
    CHECK(config_hash(d) != config_hash(a));
    // The canonical dump round-trips.
    const auto back = parse_config(config_to_json(c).dump());
    CHECK(config_hash(back) == config_hash(c));
  }

  TEST_CASE("grid cells") {
    GridConfig g;
    const auto cells = grid_cells(g);
    CHECK(cells.size() == 23);
    CHECK(cells.front().label() == "ZN+IP");
    CHECK(cells.back().label() == "PR");
    g.include_none = false;
    CHECK(grid_cells(g).size() == 15);
  }

  TEST_CASE("report renderers") {
    Report r;
    r.type = "demo";
    r.provenance = {7, "00000000deadbeef"};
    r.table.columns = {"name", "value", "flag"};
    r.table.add_row({"a", 0.5, true});
    r.table.add_row({"b, c", nullptr, false});
    CHECK_THROWS(r.table.add_row({"short"}));
    const auto json = render_json(r);
    CHECK(json == render_json(parse_report(json)));
    const auto csv = render_csv(r);
    std::istringstream lines(csv);
    std::string line;
    std::getline(lines, line);
    CHECK(line.find("seed") != std::string::npos);
    CHECK(line.find("config_hash") != std::string::npos);
    int n = 0;
    while (std::getline(lines, line)) {
      ++n;
      CHECK(line.find("00000000deadbeef") != std::string::npos);
    }
    CHECK(n == 2);
    CHECK(render_text(r).find("deadbeef") != std::string::npos);
    CHECK_THROWS_AS(parse_report("[]"), DataError);
  }

  TEST_CASE("emit_report writes every format") {
    Report r;
    r.type = "demo";
    r.table.columns = {"x"};
    r.table.add_row({1});
    const auto dir = testutil::temp_dir("emit");
    emit_report(r, dir.string(), "demo");
    for (auto ext : {".json", ".txt", ".csv"}) CHECK(std::filesystem::exists(dir / ("demo" + std::string(ext))));
  }

  TEST_CASE("prepare_data on a random corpus") {
    const auto c = tiny_config(testutil::temp_dir("prep").string());
    const auto d = prepare_data(c);
    CHECK(d.split.train.n_users() == d.split.test.n_users());
    CHECK(d.valid.size() == static_cast<std::size_t>(d.split.train.n_users()));
    CHECK_FALSE(d.partition.group1.empty());
    CHECK_FALSE(d.partition.group2.empty());
    CHECK(d.corpus_max >= d.split.train.max_timestamp());
  }

  TEST_CASE("benchmark is deterministic and exports its best cell") {
    const auto dir1 = testutil::temp_dir("bench1").string();
    const auto dir2 = testutil::temp_dir("bench2").string();
    auto c1 = tiny_config(dir1);
    auto c2 = tiny_config(dir2);
    c2.output_dir = dir2;
    const auto r1 = run_benchmark(c1);
    const auto r2 = run_benchmark(c2);
    REQUIRE(r1.rows.size() == 1);
    CHECK(r1.report.table.rows.size() == 2);
    CHECK(r1.rows[0].aug_delta == r2.rows[0].aug_delta);
    CHECK(r1.rows[0].best_policy == r2.rows[0].best_policy);
    CHECK(r1.cells[0].size() == grid_cells(c1.grid).size());
    if (r1.rows[0].best_policy != "none") {
      CHECK(std::filesystem::exists(std::filesystem::path(dir1) / r1.rows[0].manifest / "manifest.json"));
    }
    // Thread count does not change results.
    auto c3 = tiny_config(testutil::temp_dir("bench3").string());
    c3.threads = 1;
    CHECK(run_benchmark(c3).rows[0].aug_delta == r1.rows[0].aug_delta);
  }

  TEST_CASE("sweep sizes and transfer contract") {
    auto c = tiny_config(testutil::temp_dir("sweep").string());
    c.sweep.cell = "LD+IT";
    c.sweep.psi_user_values = {0.25, 0.45};
    c.sweep.psi_item_values = {0.1, 0.2, 0.3};
    const auto data = prepare_data(c);
    const auto run = train_and_label(data, c.models[0]);
    const auto s = run_psi_sweep(c, data, run);
    CHECK(s.points.size() == 5);
    CHECK(s.report.table.rows.size() == 5);
    CHECK(s.points[0].cell.n_users_sampled <= s.points[1].cell.n_users_sampled);
    c.sweep.cell = "LD";
    CHECK_THROWS_AS(run_psi_sweep(c, data, run), ConfigError);
    CHECK_THROWS_AS(run_transfer(c, data, "nowhere", ModelKind::kLightGcn), ContractError);
    const auto grid = run_policy_grid(c, data, run);
    CHECK(grid.table.rows.size() == grid_cells(c.grid).size() + 1);
    const auto ov = run_overlap(c, data, run);
    CHECK(ov.table.rows.size() == 5 * 5 + 3 * 3);
  }
}
