#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "support.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "reenroll/cli_harness.hpp"

using namespace support;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path temp_dir() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / fmt::format("reenroll_cli_{}", ::getpid());
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

void write_file(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

std::string data(const char* name) { return std::string(REENROLL_DATA_DIR) + "/" + name; }

const std::string kToySchema = data("toy_schema.json");
const std::string kToyScheme = data("toy_uniform_scheme.json");

}  // namespace

TEST_CASE("help and version") {
  CHECK(run({"--help"}).code == 0);
  CHECK(run({"--version"}).code == 0);
  CHECK(run({"analyze", "--bogus"}).code == 2);
  CHECK(parse_comparison("2v1") == std::pair<std::string, std::string>{"2", "1"});
  CHECK(parse_comparison("B:A") == std::pair<std::string, std::string>{"B", "A"});
}

TEST_CASE("sha256 known answers") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("analyze the two-unit toy") {
  const auto out = temp_dir() / "toy.json";
  const auto r = run({"analyze", "--data", data("toy.csv"), "--schema", kToySchema, "--scheme", kToyScheme,
                      "--compare", "AvB", "--methods", "ipw,sipw", "-o", out.string()});
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(read_text_file(out.string()));
  REQUIRE(j["results"].size() == 2);
  CHECK(j["results"][0]["method"] == "ipw");
  CHECK(j["results"][0]["theta_jk"].get<double>() == 4.0);
  CHECK(j["results"][0]["estimate"].get<double>() == 3.0);
  CHECK(j["results"][1]["theta_jk"].get<double>() == 4.0);
  CHECK(j["results"][0]["ci"].size() == 2);

  const auto man = nlohmann::json::parse(read_text_file(out.string() + ".manifest.json"));
  CHECK(man["exit_status"] == 0);
  CHECK(man["inputs"]["data"]["sha256"] == sha256_hex(read_text_file(data("toy.csv"))));
  CHECK(man["inputs"]["scheme"]["sha256"] == sha256_hex(read_text_file(kToyScheme)));
}

TEST_CASE("analyze output equals the library") {
  SimConfig cfg;
  cfg.n = 250;
  const auto trial = generate_trial(cfg, 2);
  const auto csv = temp_dir() / "sim.csv";
  {
    std::ofstream f(csv, std::ios::binary);
    write_records(f, trial.records);
  }
  const auto out = temp_dir() / "sim.json";
  const auto r = run({"analyze", "--data", csv.string(), "--schema", data("simplify_schema.json"), "--scheme",
                      data("simplify_scheme.json"), "--compare", "2v1", "--compare", "3v1", "--methods",
                      "ipw,aps", "--covariates", "x_c,x_b", "-o", out.string(), "--manifest",
                      (temp_dir() / "m.json").string()});
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(read_text_file(out.string()));

  // Reference through the library on the same parsed file.
  const auto rs = parse_records_file(csv.string(), Schema::from_json(read_data("simplify_schema.json")));
  const auto scheme = AssignmentScheme::from_json(read_data("simplify_scheme.json"));
  const DesignResolution d(scheme, rs);
  std::size_t i = 0;
  for (const char* jarm : {"2", "3"}) {
    const AnalysisFrame f(d, jarm, "1");
    for (auto m : {Method::ipw, Method::aps}) {
      const auto a = analyze_comparison(m, f, AdjustmentOptions{{"x_c", "x_b"}, Pooling::per_episode});
      const auto& res = j["results"][i++];
      CHECK(res["method"] == std::string(method_name(m)));
      CHECK(res["estimate"].get<double>() == a.contrast.value);
      CHECK(res["se"].get<double>() == a.variance.se);
      CHECK(res["n_participants"].get<std::size_t>() == f.n_analysis());
      CHECK(res["n_person_episodes"].get<std::size_t>() == f.n_person_episodes());
    }
  }
}

TEST_CASE("analyze errors map to exit codes") {
  SUBCASE("uncovered z-pattern") {
    const auto scheme = temp_dir() / "north_only.json";
    write_file(scheme, R"({"arms":["A","B"],"rows":[{"episode":"any","z":{"site":"north"},"p":{"A":"0.5","B":"0.5"}}]})");
    const auto r = run({"analyze", "--data", data("toy.csv"), "--schema", kToySchema, "--scheme", scheme.string(),
                        "--compare", "AvB", "--methods", "ipw", "--manifest", (temp_dir() / "m1.json").string()});
    CHECK(r.code == 2);
    CHECK(contains(r.err, "uncovered z-pattern"));
    const auto man = nlohmann::json::parse(read_text_file((temp_dir() / "m1.json").string()));
    CHECK(man["exit_status"] == 2);
  }
  SUBCASE("empty-arm stratum") {
    const auto csv = temp_dir() / "one_arm.csv";
    write_file(csv, "participant_id,episode,site,age,arm,outcome\nu1,1,north,41,A,4\nu2,1,south,37,A,1\n");
    const auto r = run({"analyze", "--data", csv.string(), "--schema", kToySchema, "--scheme", kToyScheme,
                        "--compare", "AvB", "--methods", "ps", "--manifest", (temp_dir() / "m2.json").string()});
    CHECK(r.code == 3);
    CHECK(contains(r.err, "empty-arm stratum"));
  }
  SUBCASE("adjusted method without covariates") {
    const auto r = run({"analyze", "--data", data("toy.csv"), "--schema", kToySchema, "--scheme", kToyScheme,
                        "--compare", "AvB", "--methods", "aipw", "--manifest", (temp_dir() / "m3.json").string()});
    CHECK(r.code == 2);
  }
  SUBCASE("missing data file") {
    const auto r = run({"analyze", "--data", (temp_dir() / "nope.csv").string(), "--schema", kToySchema,
                        "--scheme", kToyScheme, "--compare", "AvB", "--manifest", (temp_dir() / "m4.json").string()});
    CHECK(r.code == 2);
  }
}

TEST_CASE("validate") {
  CHECK(run({"validate", "--data", data("toy.csv"), "--schema", kToySchema, "--scheme", kToyScheme}).code == 0);
}

TEST_CASE("simulate is byte-identical across runs and worker counts") {
  const auto truth = temp_dir() / "truth.json";
  const auto o = run({"oracle", "--draws", "70000", "--workers", "2", "-o", truth.string()});
  REQUIRE(o.code == 0);
  auto sim = [&](const char* workers, const char* name) {
    const auto out = temp_dir() / name;
    const auto r = run({"simulate", "--n", "150", "--reps", "4", "--truth-file", truth.string(), "--workers",
                        workers, "-o", out.string()});
    REQUIRE(r.code == 0);
    return read_text_file(out.string());
  };
  const auto a = sim("1", "s1.csv");
  const auto b = sim("4", "s4.csv");
  const auto c = sim("1", "s1b.csv");
  CHECK(a == b);
  CHECK(a == c);
  CHECK(contains(a, "method,comparison,truth,bias,sd,mean_se,cp,reps_used"));
  const auto man = nlohmann::json::parse(read_text_file((temp_dir() / "s1.csv").string() + ".manifest.json"));
  CHECK(man["inputs"]["truth"]["sha256"] == sha256_hex(read_text_file(truth.string())));
  CHECK(man["seed"] == SimConfig{}.seed);
  CHECK(man["truth_source"] == "file");
}

TEST_CASE("simulate can dump generated datasets") {
  const auto truth = temp_dir() / "truth2.json";
  REQUIRE(run({"oracle", "--draws", "20000", "-o", truth.string()}).code == 0);
  const auto dir = temp_dir() / "dump";
  const auto r = run({"simulate", "--n", "60", "--reps", "2", "--truth-file", truth.string(), "--dump-reps", "1",
                      "--dump-dir", dir.string(), "-o", (temp_dir() / "d.csv").string()});
  REQUIRE(r.code == 0);
  CHECK(fs::exists(dir / "rep_00000.csv"));
  CHECK(fs::exists(dir / "rep_00000_latent.csv"));
  CHECK_FALSE(fs::exists(dir / "rep_00001.csv"));
}

TEST_CASE("cleanup") { fs::remove_all(temp_dir()); }
