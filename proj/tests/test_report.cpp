#include <gtest/gtest.h>

#include <fstream>

#include "fixtures.hpp"
#include "spanprobe/manifest.hpp"
#include "spanprobe/report.hpp"

using namespace spanprobe;
namespace fs = std::filesystem;

namespace {

LayerCurve fake_curve(std::uint32_t layers, std::uint32_t best) {
  LayerCurve c;
  for (std::uint32_t l = 0; l < layers; ++l) {
    MDLReport r;
    r.num_examples = 100;
    r.num_classes = 2;
    r.schedule = {{10, 100}, {0.1, 1.0}};
    r.compression = l == best ? 1.8 : 1.0 + 0.01 * l;
    r.total_mdl_bits = 100.0 / r.compression;
    r.uniform_cost_bits = 10.0;
    r.block_codelengths_bits = {r.total_mdl_bits - 10.0};
    r.layers = LayerSelect::single(l);
    c.layers.push_back(l);
    c.compression.push_back(r.compression);
    c.reports.push_back(r);
  }
  c.best_layer = best;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::size_t count(const std::string& s, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = s.find(needle); pos != std::string::npos; pos = s.find(needle, pos + 1)) ++n;
  return n;
}

}  // namespace

TEST(Csv, FieldQuoting) {
  EXPECT_EQ(csv_field("plain"), "plain");
  EXPECT_EQ(csv_field("a,b"), "\"a,b\"");
  EXPECT_EQ(csv_field("say \"hi\""), "\"say \"\"hi\"\"\"");
  EXPECT_EQ(csv_field("two\nlines"), "\"two\nlines\"");
  CsvWriter w({"x", "y"});
  w.row({"1", "a,b"});
  EXPECT_EQ(w.str(), "x,y\r\n1,\"a,b\"\r\n");
  EXPECT_THROW(w.row({"only one"}), Error);
}

TEST(Csv, RealsRoundTrip) {
  for (double v : {0.1, 1.0 / 3.0, 1.8734512345678901, 1e-300}) EXPECT_EQ(std::stod(format_real(v)), v);
}

TEST(Svg, ThirteenLayerCurveHasThirteenTicks) {
  const auto curve = fake_curve(13, 6);
  const auto svg = layer_curves_svg({{"bert", curve.compression}});
  EXPECT_EQ(count(svg, "class=\"xtick\""), 13u);
  EXPECT_NE(svg.find(">layer</text>"), std::string::npos);
  EXPECT_NE(svg.find(">compression</text>"), std::string::npos);
  EXPECT_NE(svg.find(">bert</text>"), std::string::npos);
  EXPECT_EQ(count(svg, "<polyline"), 1u);
  EXPECT_EQ(xml_escape("a<b&\"c\">"), "a&lt;b&amp;&quot;c&quot;&gt;");
  EXPECT_THROW(layer_curves_svg({}), Error);
}

TEST(EmitReports, EmptyResultsRejected) {
  EXPECT_THROW(emit_reports(RunResults{"r", {}, {}, {}, {}}, oracle::temp_dir("empty")), Error);
}

TEST(EmitReports, WritesExpectedFilesWithStableBytes) {
  RunResults res;
  res.run_id = "run,1";
  res.curve = fake_curve(13, 6);
  res.mdl = res.curve->reports;
  res.edge = {LayerSelect::single(6), EdgeProbeResult{0.9, {0.9, 0.8, 1.0}, {1, 2, 3}, 700, 200}};
  const auto a = oracle::temp_dir("emit_a"), b = oracle::temp_dir("emit_b");
  const auto written = emit_reports(res, a);
  emit_reports(res, b);
  EXPECT_EQ(written.size(), 4u);
  for (const char* f : {"mdl_report.csv", "layer_curve.csv", "layer_curve.svg", "edge_report.csv"}) {
    ASSERT_TRUE(fs::exists(a / f)) << f;
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
  const auto curve_csv = slurp(a / "layer_curve.csv");
  EXPECT_EQ(curve_csv.rfind("schema_version,run_id,layer,compression,total_mdl_bits,is_best\r\n", 0), 0u);
  EXPECT_EQ(count(curve_csv, "\r\n"), 14u);
  EXPECT_NE(curve_csv.find("1,\"run,1\",6,1.8,"), std::string::npos);
  EXPECT_NE(slurp(a / "mdl_report.csv").find(",10 100,"), std::string::npos);
}

TEST(EmitReports, PartialCurveSkipsSvg) {
  RunResults res;
  res.run_id = "partial";
  auto c = fake_curve(4, 2);
  c.layers = {1, 2, 3, 5};
  res.curve = c;
  const auto dir = oracle::temp_dir("partial");
  emit_reports(res, dir);
  EXPECT_TRUE(fs::exists(dir / "layer_curve.csv"));
  EXPECT_FALSE(fs::exists(dir / "layer_curve.svg"));
}

TEST(EmitReports, UnwritableOutdirIsIoError) {
  const auto dir = oracle::temp_dir("unwritable");
  std::ofstream(dir / "file") << "x";
  RunResults res;
  res.run_id = "r";
  res.mdl = fake_curve(1, 0).reports;
  try {
    emit_reports(res, dir / "file" / "sub");
    FAIL();
  } catch (const IoError& e) {
    EXPECT_EQ(e.path(), (dir / "file" / "sub").string());
  }
}

TEST(Sha256, KnownDigest) {
  const auto p = oracle::temp_dir("sha") / "abc.txt";
  std::ofstream(p, std::ios::binary) << "abc";
  EXPECT_EQ(sha256_file(p), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_THROW(sha256_file(p.parent_path() / "missing"), IoError);
}

TEST(Manifest, ResumeChecks) {
  const auto dir = oracle::temp_dir("manifest");
  const auto input = dir / "in.bin";
  std::ofstream(input, std::ios::binary) << "version one";
  RunManifest m;
  m.command = "mdl";
  m.add_input("activations", input);
  m.seeds = {1};
  EXPECT_NO_THROW(check_resume(m, dir));  // no manifest yet
  write_manifest(m, dir);
  EXPECT_NO_THROW(check_resume(m, dir));

  RunManifest other = m;
  other.command = "edge";
  EXPECT_THROW(check_resume(other, dir), ManifestMismatchError);

  std::ofstream(input, std::ios::binary) << "version two";
  RunManifest changed;
  changed.command = "mdl";
  changed.add_input("activations", input);
  EXPECT_THROW(check_resume(changed, dir), ManifestMismatchError);

  const auto j = nlohmann::json::parse(slurp(dir / kManifestFile));
  EXPECT_EQ(j["engine_version"], kEngineVersion);
  EXPECT_EQ(j["inputs"][0]["sha256"].get<std::string>().size(), 64u);
  EXPECT_EQ(j["config"]["batch_size"], 32);
  EXPECT_THROW(m.add_input("x", dir / "missing"), IoError);
}
