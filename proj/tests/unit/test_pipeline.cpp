#include <algorithm>
#include <cmath>

#include "dualmatch/pipeline.hpp"
#include "helpers.hpp"

using namespace dualmatch;

TEST_CASE("pipeline config INI round trip") {
  test::TempDir dir("cfg");
  PipelineConfig c = PipelineConfig::synthetic_defaults();
  c.seed = 99;
  c.threads = 3;
  c.data_dir = dir.path() / "syn";
  c.delimiter = '\t';
  c.clusters = 3000;
  c.model.block_widths = {32, 16, 8};
  c.model.adam.lr = 3e-4;
  c.tau = 0.07;
  c.save(dir / "c.ini");
  const auto back = PipelineConfig::load(dir / "c.ini");
  CHECK(back.to_ini() == c.to_ini());
  CHECK(back.delimiter == '\t');
  CHECK(back.model.block_widths == std::vector<std::size_t>{32, 16, 8});
  CHECK(back.model.adam.lr == 3e-4);
  CHECK(back.clusters == 3000);
  CHECK(back.to_ini().find("k = 3000") != std::string::npos);
}

TEST_CASE("pipeline config resolves relative paths against the file") {
  test::TempDir dir("cfg2");
  test::write_text(dir / "c.ini", "[data]\nkind = tabular\nschema = s.ini\nhouseholds = h.csv\nunits = u.csv\n");
  const auto c = PipelineConfig::load(dir / "c.ini");
  CHECK(c.kind == DataKind::Tabular);
  CHECK(c.schema == dir.path() / "s.ini");
  CHECK(test::error_code_of([&] { PipelineConfig::parse("[data]\nkind = bogus\n"); }) == ErrorCode::Usage);
  CHECK(test::error_code_of([&] { PipelineConfig::parse("[model]\nbatch_size = x\n"); }) == ErrorCode::Usage);
}

TEST_CASE("cluster count resolution") {
  CHECK(resolve_clusters(0, 3000, 100) == 100);
  CHECK(resolve_clusters(0, 30, 100) == 30);
  CHECK(resolve_clusters(-1, 30, 100) == 100);
  CHECK(resolve_clusters(7, 30, 100) == 7);
}

TEST_CASE("synthetic pipeline: labels, sweep and stage caching") {
  test::TempDir dir("pipe");
  write_synthetic_dataset(dir / "syn", generate_synthetic(200, 4), 4, 0.05);
  PipelineConfig c = PipelineConfig::synthetic_defaults();
  c.seed = 4;
  c.data_dir = dir / "syn";
  c.model.epochs = 1;
  c.model.batch_size = 32;
  c.clusters_b = 10;
  const auto data = prepare_data(c);
  CHECK(data.train_a.num_rows() == 160);
  CHECK(data.test_a.num_rows() == 8);
  CHECK(data.test_pairs.size() == 64);

  const auto labels = build_labels(data, c, dir / "cache");
  CHECK(labels.k_a == 160);
  CHECK(labels.k_b == 10);
  const auto cached = build_labels(data, c, dir / "cache");
  CHECK(cached.a.labels == labels.a.labels);
  CHECK(cached.b.labels == labels.b.labels);
  CHECK(cached.labels.num_positives() == labels.labels.num_positives());

  c.clusters_a = 0;
  c.clusters_b = 0;
  const auto rows = sweep_clusters(data, c, {5, 40, 160});
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].positives >= rows[1].positives);
  CHECK(rows[1].positives >= rows[2].positives);
  CHECK(rows[2].label == "Singleton");
  CHECK(rows[2].median_cluster_size == 1.0);
  for (const auto& r : rows) CHECK(r.seed == 4);
  CHECK(test::error_code_of([&] { sweep_clusters(data, c, {161}); }) == ErrorCode::KTooLarge);
}
