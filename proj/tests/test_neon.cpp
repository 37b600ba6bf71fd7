#include <doctest.h>

#include <cstring>
#include <numeric>

#include <httplib.h>
#include <json.hpp>

#include <atomic>
#include <fstream>
#include <map>
#include <thread>

#include "wqgamm/errors.hpp"
#include "wqgamm/neon_client.hpp"

using namespace wqgamm;
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

fs::path temp_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("wqgamm_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string md5_of(const std::string& text) {
  const fs::path p = temp_dir("md5") / "x";
  std::ofstream(p, std::ios::binary) << text;
  return neon::file_checksum(p, "md5");
}

/// Local stand-in for the data API: manifests under /api/v0/data/... and
/// file bodies under /files/<name>.
class MockApi {
 public:
  MockApi() {
    server_.Get(R"(/api/v0/data/([^/]+)/([^/]+)/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      ++manifest_requests;
      last_query = req.target;
      if (failures_left > 0) {
        --failures_left;
        res.status = 503;
        return;
      }
      const std::string key = req.matches[1].str() + "/" + req.matches[2].str() + "/" + req.matches[3].str();
      auto it = manifests_.find(key);
      if (it == manifests_.end()) {
        res.status = 404;
        res.set_content(R"({"error":"not found"})", "application/json");
        return;
      }
      res.set_content(it->second, "application/json");
    });
    server_.Get(R"(/files/(.+))", [this](const httplib::Request& req, httplib::Response& res) {
      ++file_requests;
      auto it = bodies_.find(req.matches[1].str());
      if (it == bodies_.end()) {
        res.status = 404;
        return;
      }
      res.set_content(it->second, "text/csv");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~MockApi() {
    server_.stop();
    thread_.join();
  }

  std::string base() const { return "http://127.0.0.1:" + std::to_string(port_) + "/api/v0"; }

  void add_month(const std::string& product, const std::string& site, const std::string& month,
                 const std::vector<std::pair<std::string, std::string>>& files, bool corrupt_first = false) {
    nlohmann::json doc;
    doc["data"]["files"] = nlohmann::json::array();
    bool first = true;
    for (const auto& [name, body] : files) {
      bodies_[name] = body;
      std::string sum = md5_of(body);
      if (corrupt_first && first) sum = std::string(32, '0');
      first = false;
      doc["data"]["files"].push_back({{"name", name},
                                      {"size", std::to_string(body.size())},
                                      {"md5", sum},
                                      {"url", "http://127.0.0.1:" + std::to_string(port_) + "/files/" + name}});
    }
    manifests_[product + "/" + site + "/" + month] = doc.dump();
  }

  std::atomic<int> manifest_requests{0};
  std::atomic<int> file_requests{0};
  std::atomic<int> failures_left{0};
  std::string last_query;

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  std::map<std::string, std::string> manifests_;
  std::map<std::string, std::string> bodies_;
};

neon::ProductRequest nitrate_request(std::vector<std::string> months) {
  neon::ProductRequest r;
  r.product_id = "DP1.20033.001";
  r.site_code = "ARIK";
  r.months = std::move(months);
  return r;
}

neon::ClientOptions local(const MockApi& api) {
  neon::ClientOptions o;
  o.base_url = api.base();
  o.initial_backoff = std::chrono::milliseconds(1);
  o.timeout = std::chrono::seconds(5);
  return o;
}

const char* kCsv1 = "startDateTime,surfWaterNitrateMean,finalQF\n2019-01-01T00:00:00Z,1.5,0\n";
const char* kCsv2 = "startDateTime,surfWaterNitrateMean,finalQF\n2019-01-01T00:15:00Z,1.6,0\n";
const char* kCsv3 = "startDateTime,surfWaterNitrateMean,finalQF\n2019-02-01T00:00:00Z,1.7,1\n";

}  // namespace

TEST_CASE("request validation") {
  auto r = nitrate_request({"2019-01"});
  CHECK_NOTHROW(neon::validate(r));
  r.months.clear();
  CHECK_THROWS_AS(neon::validate(r), PreconditionError);
  r = nitrate_request({"2019-13"});
  CHECK_THROWS_AS(neon::validate(r), PreconditionError);
  r = nitrate_request({"2019-01"});
  r.product_id = "DP1.2003.001";
  CHECK_THROWS_AS(neon::validate(r), PreconditionError);
  r = nitrate_request({"2019-01"});
  r.site_code = "arik";
  CHECK_THROWS_AS(neon::validate(r), PreconditionError);
  r = nitrate_request({"2019-01"});
  r.package = "full";
  CHECK_THROWS_AS(neon::validate(r), PreconditionError);
}

TEST_CASE("month ranges") {
  const auto m = neon::month_range("2018-11", "2019-02");
  CHECK(m == std::vector<std::string>{"2018-11", "2018-12", "2019-01", "2019-02"});
  CHECK(neon::month_range("2018-01", "2019-12").size() == 24);
  CHECK_THROWS(neon::month_range("2019-02", "2018-11"));
}

TEST_CASE("the public API needs an explicit opt-in") {
  neon::ClientOptions o;
  o.base_url = std::string(neon::kPublicApi);
  CHECK_THROWS_AS(neon::list_files(nitrate_request({"2019-01"}), o), PreconditionError);
}

TEST_CASE("checksums") {
  const fs::path d = temp_dir("sum");
  std::ofstream(d / "f", std::ios::binary) << "The quick brown fox jumps over the lazy dog";
  CHECK(neon::file_checksum(d / "f", "md5") == "9e107d9d372bb6826bd81d3542a419d6");
  CHECK(neon::file_checksum(d / "f", "crc32") == "414fa339");
}

TEST_CASE("fetch downloads, verifies and then serves from cache") {
  MockApi api;
  api.add_month("DP1.20033.001", "ARIK", "2019-01", {{"NSW_15_minute.2019-01.b.csv", kCsv2}, {"NSW_15_minute.2019-01.a.csv", kCsv1}});
  api.add_month("DP1.20033.001", "ARIK", "2019-02", {{"NSW_15_minute.2019-02.csv", kCsv3}});
  const fs::path dest = temp_dir("fetch");
  const auto req = nitrate_request({"2019-01", "2019-02"});

  const auto files = neon::list_files(req, local(api));
  REQUIRE(files.size() == 3);
  CHECK(files[0].name == "NSW_15_minute.2019-01.a.csv");
  CHECK(files[0].checksum_kind == "md5");
  CHECK(api.last_query.find("release=RELEASE-2021") != std::string::npos);
  CHECK(api.last_query.find("package=basic") != std::string::npos);

  const auto first = neon::fetch(req, dest, local(api));
  CHECK(first.files_downloaded == 3);
  CHECK(first.files_cached == 0);
  CHECK(first.bytes_downloaded == std::strlen(kCsv1) + std::strlen(kCsv2) + std::strlen(kCsv3));
  CHECK(read_file(dest / "NSW_15_minute.2019-01.a.csv") == kCsv1);
  for (const auto& e : fs::directory_iterator(dest)) CHECK(e.path().extension() != ".part");

  const int before = api.file_requests;
  const auto second = neon::fetch(req, dest, local(api));
  CHECK(second.bytes_downloaded == 0);
  CHECK(second.files_downloaded == 0);
  CHECK(second.files_cached == 3);
  CHECK(api.file_requests == before);
  CHECK(second.paths == first.paths);

  // a damaged cached copy is replaced
  std::ofstream(dest / "NSW_15_minute.2019-02.csv", std::ios::binary) << "garbage";
  const auto third = neon::fetch(req, dest, local(api));
  CHECK(third.files_downloaded == 1);
  CHECK(read_file(dest / "NSW_15_minute.2019-02.csv") == kCsv3);

  CHECK_THROWS_AS(neon::read_neon_series(dest, neon::mapping_for("nitrate")), EmptyInputError);

  fs::remove_all(dest);
}

TEST_CASE("checksum mismatch raises an integrity error naming the file") {
  MockApi api;
  api.add_month("DP1.20033.001", "ARIK", "2019-01", {{"bad.csv", kCsv1}}, true);
  const fs::path dest = temp_dir("bad");
  try {
    neon::fetch(nitrate_request({"2019-01"}), dest, local(api));
    FAIL("expected IntegrityError");
  } catch (const IntegrityError& e) {
    CHECK(std::string(e.what()).find("bad.csv") != std::string::npos);
  }
  CHECK_FALSE(fs::exists(dest / "bad.csv"));
  CHECK_FALSE(fs::exists(dest / "bad.csv.part"));
  fs::remove_all(dest);
}

TEST_CASE("unknown site is not found; transient failures are retried") {
  MockApi api;
  auto req = nitrate_request({"2019-01"});
  req.site_code = "ZZZZ";
  CHECK_THROWS_AS(neon::list_files(req, local(api)), NotFoundError);

  api.add_month("DP1.20033.001", "ARIK", "2019-01", {{"a.csv", kCsv1}});
  api.failures_left = 2;
  CHECK(neon::list_files(nitrate_request({"2019-01"}), local(api)).size() == 1);

  api.failures_left = 100;
  auto o = local(api);
  o.max_retries = 2;
  CHECK_THROWS_AS(neon::list_files(nitrate_request({"2019-01"}), o), TransportError);
}

TEST_CASE("neon tables are read through their column mapping") {
  const fs::path d = temp_dir("tables");
  std::ofstream(d / "NEON.D10.ARIK.DP1.20033.001.NSW_15_minute.2019-01.basic.csv") << kCsv1 << "2019-01-01T00:15:00Z,1.6,0\n";
  std::ofstream(d / "NEON.D10.ARIK.DP1.20033.001.NSW_15_minute.2019-02.basic.csv") << kCsv3;
  std::ofstream(d / "NEON.D10.ARIK.DP1.20288.001.waq_instantaneous.2019-01.basic.csv") << "x\n";
  const auto s = neon::read_neon_series(d, neon::mapping_for("nitrate"));
  CHECK(s.series.variable == "nitrate");
  CHECK(s.series.values == std::vector<double>{1.5, 1.6, 1.7});
  CHECK(s.series.flagged(2));
  CHECK(neon::mapping_for("turbidity").schema.value == "turbidity");
  CHECK_THROWS(neon::mapping_for("salinity"));
  fs::remove_all(d);
}
