#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wqgamm/ingest.hpp"

namespace wqgamm::neon {

inline constexpr std::string_view kPublicApi = "https://data.neonscience.org/api/v0";
inline constexpr std::string_view kDefaultRelease = "RELEASE-2021";

struct ProductRequest {
  std::string product_id;           ///< e.g. DP1.20033.001
  std::string site_code;            ///< four upper-case letters, e.g. ARIK
  std::vector<std::string> months;  ///< YYYY-MM
  std::optional<std::string> release_tag = std::string(kDefaultRelease);
  std::string package = "basic";
};

/// Throws PreconditionError describing the first invalid field.
void validate(const ProductRequest& request);

/// Inclusive list of YYYY-MM months between two YYYY-MM bounds.
std::vector<std::string> month_range(std::string_view first, std::string_view last);

struct ClientOptions {
  /// API root. Defaults to $NEON_API_BASE, then the public NEON API.
  std::string base_url;
  /// Requests to the public API are refused unless this is set.
  bool allow_live = false;
  int max_retries = 3;
  std::chrono::milliseconds initial_backoff{250};
  std::chrono::seconds timeout{60};
  unsigned workers = 4;

  std::string resolved_base_url() const;
};

struct RemoteFile {
  std::string month;
  std::string name;
  std::string url;
  std::uint64_t size = 0;
  std::string checksum;       ///< lower-case hex, empty when the API gives none
  std::string checksum_kind;  ///< "md5", "crc32" or empty
};

/// File manifests for every requested month, sorted by file name.
/// Throws NotFoundError for unknown products or sites and TransportError when
/// the API stays unreachable after the retries.
std::vector<RemoteFile> list_files(const ProductRequest& request, const ClientOptions& options = {});

struct FetchResult {
  std::vector<std::filesystem::path> paths;  ///< manifest order
  std::uint64_t bytes_downloaded = 0;
  std::size_t files_downloaded = 0;
  std::size_t files_cached = 0;
};

/// Downloads the manifest's files into `dest`. Files already present with a
/// matching checksum are not downloaded again. Each download goes to a
/// temporary file that is renamed only after verification.
/// Throws IntegrityError naming the file on checksum mismatch.
FetchResult fetch(const ProductRequest& request, const std::filesystem::path& dest,
                  const ClientOptions& options = {});
FetchResult fetch_files(std::span<const RemoteFile> files, const std::filesystem::path& dest,
                        const ClientOptions& options = {});

/// Checksum of a local file in the given kind ("md5" or "crc32"), lower-case hex.
std::string file_checksum(const std::filesystem::path& path, std::string_view kind);

/// Mapping from a NEON table to one ingest variable.
struct TableMapping {
  std::string variable;
  std::string product_id;
  std::string table;  ///< substring of the file name identifying the table
  ColumnSchema schema;
};

/// Built-in mappings for nitrate, conductance, dissolved oxygen, turbidity,
/// temperature and surface water elevation.
std::span<const TableMapping> table_mappings();
const TableMapping& mapping_for(std::string_view variable);

/// Reads every CSV in `dir` whose name contains the mapping's product id and
/// table name and merges them into one series (sorted, first duplicate kept).
LoadedSeries read_neon_series(const std::filesystem::path& dir, const TableMapping& mapping);

}  // namespace wqgamm::neon
