#include "wqgamm/neon_client.hpp"

#include <openssl/evp.h>
#include <zlib.h>

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <regex>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "wqgamm/errors.hpp"
#include "wqgamm/parallel.hpp"

namespace wqgamm::neon {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

bool valid_month(std::string_view m) {
  if (m.size() != 7 || m[4] != '-') return false;
  for (std::size_t i : {0, 1, 2, 3, 5, 6})
    if (!std::isdigit(static_cast<unsigned char>(m[i]))) return false;
  const int month = (m[5] - '0') * 10 + (m[6] - '0');
  return month >= 1 && month <= 12;
}

struct Url {
  std::string origin;  // scheme://host[:port]
  std::string path;    // begins with '/'
};

Url split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos)
    throw PreconditionError(Stage::fetch, "not an absolute URL: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  Url out;
  out.origin = url.substr(0, path_start);
  out.path = path_start == std::string::npos ? "/" : url.substr(path_start);
  return out;
}

std::unique_ptr<httplib::Client> make_client(const std::string& origin, const ClientOptions& o) {
  auto client = std::make_unique<httplib::Client>(origin);
  if (!client->is_valid()) throw PreconditionError(Stage::fetch, "unsupported URL " + origin);
  client->set_connection_timeout(o.timeout);
  client->set_read_timeout(o.timeout);
  client->set_follow_location(true);
  return client;
}

bool retryable_status(int status) { return status == 408 || status == 429 || status >= 500; }

// Runs `attempt` until it returns true, sleeping with exponential backoff.
// `attempt` returns false for retryable failures and throws for permanent ones.
template <class Attempt>
void with_retries(const ClientOptions& o, const std::string& what, Attempt&& attempt) {
  auto delay = o.initial_backoff;
  std::string last_error;
  for (int i = 0; i <= o.max_retries; ++i) {
    if (i > 0) {
      std::this_thread::sleep_for(delay);
      delay *= 2;
    }
    if (attempt(last_error)) return;
  }
  throw TransportError(Stage::fetch, what + " failed after " + std::to_string(o.max_retries) +
                                         " retries: " + last_error);
}

std::string to_hex(const unsigned char* data, std::size_t n) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(2 * n, '0');
  for (std::size_t i = 0; i < n; ++i) {
    s[2 * i] = digits[data[i] >> 4];
    s[2 * i + 1] = digits[data[i] & 0xF];
  }
  return s;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string json_string(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return {};
  if (it->is_string()) return it->get<std::string>();
  return it->dump();
}

std::uint64_t json_size(const json& j) {
  auto it = j.find("size");
  if (it == j.end() || it->is_null()) return 0;
  if (it->is_number_unsigned()) return it->get<std::uint64_t>();
  if (it->is_number()) return static_cast<std::uint64_t>(it->get<double>());
  if (it->is_string()) {
    try {
      return std::stoull(it->get<std::string>());
    } catch (const std::exception&) {
      return 0;
    }
  }
  return 0;
}

std::vector<RemoteFile> parse_manifest(const std::string& body, const std::string& month) {
  json doc;
  try {
    doc = json::parse(body);
  } catch (const json::exception& e) {
    throw TransportError(Stage::fetch, "malformed manifest for " + month + ": " + e.what());
  }
  const json& data = doc.contains("data") ? doc["data"] : doc;
  std::vector<RemoteFile> out;
  if (!data.contains("files") || !data["files"].is_array()) return out;
  for (const auto& f : data["files"]) {
    RemoteFile r;
    r.month = month;
    r.name = json_string(f, "name");
    r.url = json_string(f, "url");
    r.size = json_size(f);
    if (auto md5 = json_string(f, "md5"); !md5.empty()) {
      r.checksum = lower(md5);
      r.checksum_kind = "md5";
    } else if (auto crc = json_string(f, "crc32"); !crc.empty()) {
      r.checksum = lower(crc);
      r.checksum_kind = "crc32";
    }
    if (r.name.empty() || r.url.empty())
      throw TransportError(Stage::fetch, "manifest entry without name or url for " + month);
    out.push_back(std::move(r));
  }
  return out;
}

bool cached_copy_valid(const fs::path& path, const RemoteFile& file) {
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) return false;
  if (!file.checksum.empty()) return file_checksum(path, file.checksum_kind) == file.checksum;
  return file.size == 0 || fs::file_size(path, ec) == file.size;
}

// Downloads one file; returns the number of bytes transferred.
std::uint64_t download(const RemoteFile& file, const fs::path& target, const ClientOptions& o) {
  const Url url = split_url(file.url);
  const fs::path temp = target.string() + ".part";
  std::uint64_t bytes = 0;
  with_retries(o, "download of " + file.name, [&](std::string& error) {
    std::ofstream out(temp, std::ios::binary | std::ios::trunc);
    if (!out) throw PreconditionError(Stage::fetch, "cannot write " + temp.string());
    std::uint64_t received = 0;
    auto client = make_client(url.origin, o);
    int status = 0;
    auto res = client->Get(
        url.path,
        [&](const httplib::Response& r) {
          status = r.status;
          return r.status == 200;
        },
        [&](const char* data, std::size_t n) {
          out.write(data, static_cast<std::streamsize>(n));
          received += n;
          return static_cast<bool>(out);
        });
    out.close();
    if (!res || status != 200) {
      std::error_code ec;
      fs::remove(temp, ec);
      if (status == 404 || status == 400 || status == 403)
        throw NotFoundError(Stage::fetch, file.name + ": HTTP " + std::to_string(status));
      error = res ? "HTTP " + std::to_string(status) : httplib::to_string(res.error());
      if (status != 0 && !retryable_status(status))
        throw TransportError(Stage::fetch, file.name + ": " + error);
      return false;
    }
    bytes += received;
    return true;
  });

  if (!file.checksum.empty()) {
    const std::string got = file_checksum(temp, file.checksum_kind);
    if (got != file.checksum) {
      std::error_code ec;
      fs::remove(temp, ec);
      throw IntegrityError(Stage::fetch, "checksum mismatch for " + file.name + ": expected " +
                                             file.checksum_kind + " " + file.checksum + ", got " +
                                             got);
    }
  }
  fs::rename(temp, target);
  return bytes;
}

}  // namespace

void validate(const ProductRequest& r) {
  static const std::regex product(R"(DP[0-9]\.[0-9]{5}\.[0-9]{3})");
  if (!std::regex_match(r.product_id, product))
    throw PreconditionError(Stage::fetch, "product id '" + r.product_id +
                                              "' does not match DPx.xxxxx.xxx");
  static const std::regex site("[A-Z]{4}");
  if (!std::regex_match(r.site_code, site))
    throw PreconditionError(Stage::fetch, "site code '" + r.site_code + "' is not four letters");
  if (r.months.empty()) throw PreconditionError(Stage::fetch, "no months requested");
  for (const auto& m : r.months)
    if (!valid_month(m)) throw PreconditionError(Stage::fetch, "invalid month '" + m + "'");
  if (r.package != "basic" && r.package != "expanded")
    throw PreconditionError(Stage::fetch, "package must be basic or expanded");
}

std::vector<std::string> month_range(std::string_view first, std::string_view last) {
  if (!valid_month(first) || !valid_month(last))
    throw PreconditionError(Stage::fetch, "months must be YYYY-MM");
  auto index = [](std::string_view m) {
    return std::stoi(std::string(m.substr(0, 4))) * 12 + std::stoi(std::string(m.substr(5, 2))) - 1;
  };
  std::vector<std::string> out;
  for (int i = index(first); i <= index(last); ++i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02d", i / 12, i % 12 + 1);
    out.emplace_back(buf);
  }
  if (out.empty()) throw PreconditionError(Stage::fetch, "empty month range");
  return out;
}

std::string ClientOptions::resolved_base_url() const {
  std::string base = base_url;
  if (base.empty()) {
    const char* env = std::getenv("NEON_API_BASE");
    base = env && *env ? env : std::string(kPublicApi);
  }
  while (!base.empty() && base.back() == '/') base.pop_back();
  return base;
}

std::vector<RemoteFile> list_files(const ProductRequest& request, const ClientOptions& options) {
  validate(request);
  const std::string base = options.resolved_base_url();
  if (base == kPublicApi && !options.allow_live)
    throw PreconditionError(Stage::fetch,
                            "live NEON API access is disabled; enable it explicitly or set "
                            "NEON_API_BASE to a mirror");
  const Url root = split_url(base);
  const std::string prefix = root.path == "/" ? "" : root.path;

  std::vector<RemoteFile> all;
  for (const auto& month : request.months) {
    std::string path = prefix + "/data/" + request.product_id + "/" + request.site_code + "/" +
                       month + "?package=" + request.package;
    if (request.release_tag && !request.release_tag->empty())
      path += "&release=" + *request.release_tag;
    std::string body;
    with_retries(options, "manifest request for " + month, [&](std::string& error) {
      auto client = make_client(root.origin, options);
      auto res = client->Get(path);
      if (!res) {
        error = httplib::to_string(res.error());
        return false;
      }
      if (res->status == 200) {
        body = res->body;
        return true;
      }
      if (res->status == 404 || res->status == 400)
        throw NotFoundError(Stage::fetch, request.product_id + " at " + request.site_code + " for " +
                                              month + ": HTTP " + std::to_string(res->status));
      error = "HTTP " + std::to_string(res->status);
      if (!retryable_status(res->status))
        throw TransportError(Stage::fetch, "manifest request for " + month + ": " + error);
      return false;
    });
    auto files = parse_manifest(body, month);
    all.insert(all.end(), std::make_move_iterator(files.begin()),
               std::make_move_iterator(files.end()));
  }
  std::stable_sort(all.begin(), all.end(),
                   [](const RemoteFile& a, const RemoteFile& b) { return a.name < b.name; });
  return all;
}

FetchResult fetch_files(std::span<const RemoteFile> files, const fs::path& dest,
                        const ClientOptions& options) {
  std::error_code ec;
  fs::create_directories(dest, ec);
  if (ec) throw PreconditionError(Stage::fetch, "cannot create " + dest.string() + ": " + ec.message());

  for (std::size_t i = 0; i < files.size(); ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (files[i].name == files[j].name)
        throw PreconditionError(Stage::fetch, "duplicate file name in manifest: " + files[i].name);

  FetchResult result;
  result.paths.resize(files.size());
  std::vector<std::uint64_t> bytes(files.size(), 0);
  std::vector<std::uint8_t> cached(files.size(), 0);
  std::vector<std::exception_ptr> errors(files.size());
  const unsigned workers = std::max(1u, options.workers);

  parallel_for(
      files.size(),
      [&](std::size_t i) {
        const RemoteFile& f = files[i];
        const fs::path target = dest / fs::path(f.name).filename();
        result.paths[i] = target;
        try {
          if (cached_copy_valid(target, f)) {
            cached[i] = 1;
            return;
          }
          bytes[i] = download(f, target, options);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      },
      workers);

  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  for (std::size_t i = 0; i < files.size(); ++i) {
    result.bytes_downloaded += bytes[i];
    if (cached[i])
      ++result.files_cached;
    else
      ++result.files_downloaded;
  }
  return result;
}

FetchResult fetch(const ProductRequest& request, const fs::path& dest, const ClientOptions& options) {
  const auto files = list_files(request, options);
  return fetch_files(files, dest, options);
}

std::string file_checksum(const fs::path& path, std::string_view kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PreconditionError(Stage::fetch, "cannot read " + path.string());
  std::vector<char> buf(1 << 16);
  if (kind == "md5") {
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    EVP_DigestInit_ex(ctx.get(), EVP_md5(), nullptr);
    while (in) {
      in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
      if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx.get(), digest, &len);
    return to_hex(digest, len);
  }
  if (kind == "crc32") {
    uLong crc = crc32(0L, Z_NULL, 0);
    while (in) {
      in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
      if (in.gcount() > 0)
        crc = crc32(crc, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(in.gcount()));
    }
    char hex[9];
    std::snprintf(hex, sizeof hex, "%08lx", static_cast<unsigned long>(crc));
    return hex;
  }
  throw PreconditionError(Stage::fetch, "unknown checksum kind '" + std::string(kind) + "'");
}

std::span<const TableMapping> table_mappings() {
  static const std::vector<TableMapping> mappings = {
      {"nitrate", "DP1.20033.001", "NSW_15_minute", {"startDateTime", "surfWaterNitrateMean", "finalQF"}},
      {"cond", "DP1.20288.001", "waq_instantaneous",
       {"startDateTime", "specificConductance", "specificCondFinalQF"}},
      {"do", "DP1.20288.001", "waq_instantaneous",
       {"startDateTime", "dissolvedOxygen", "dissolvedOxygenFinalQF"}},
      {"turbidity", "DP1.20288.001", "waq_instantaneous",
       {"startDateTime", "turbidity", "turbidityFinalQF"}},
      {"temp", "DP1.20053.001", "TSW_5min", {"startDateTime", "surfWaterTempMean", "finalQF"}},
      {"elevation", "DP1.20016.001", "EOS_5_min",
       {"startDateTime", "surfacewaterElevMean", "sWatElevFinalQF"}},
  };
  return mappings;
}

const TableMapping& mapping_for(std::string_view variable) {
  for (const auto& m : table_mappings())
    if (m.variable == variable) return m;
  throw PreconditionError(Stage::fetch, "no NEON table mapping for '" + std::string(variable) + "'");
}

LoadedSeries read_neon_series(const fs::path& dir, const TableMapping& mapping) {
  std::vector<fs::path> files;
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(dir, ec)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (name.ends_with(".csv") && name.find(mapping.product_id) != std::string::npos &&
        name.find(mapping.table) != std::string::npos)
      files.push_back(entry.path());
  }
  if (ec) throw PreconditionError(Stage::ingest, "cannot list " + dir.string() + ": " + ec.message());
  std::sort(files.begin(), files.end());
  std::vector<LoadedSeries> parts;
  for (const auto& f : files) {
    try {
      parts.push_back(load_series(f, mapping.schema, mapping.variable));
    } catch (const EmptyInputError&) {
    }
  }
  if (parts.empty())
    throw EmptyInputError(Stage::ingest, "no " + mapping.table + " rows for '" + mapping.variable +
                                             "' in " + dir.string());
  return merge_series(parts);
}

}  // namespace wqgamm::neon
