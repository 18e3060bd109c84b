#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "vemlab/mdp.hpp"
#include "vemlab/memory.hpp"

namespace vemlab {

inline constexpr int kMdpFormatVersion = 1;
inline constexpr int kPolicyFormatVersion = 1;
inline constexpr int kDatasetFormatVersion = 1;

// MDPs and policies are JSON documents; datasets are JSON lines with a
// versioned header line followed by one trajectory per line. Doubles are
// written in shortest round-trip form, so parse(serialize(x)) == x bitwise.
// Malformed input throws FormatError; well-formed but invalid content throws
// ParameterError from the type's own validation.

std::string serialize_mdp(const TabularMdp& mdp);
TabularMdp parse_mdp(std::string_view text);

std::string serialize_policy(const TabularPolicy& policy);
TabularPolicy parse_policy(std::string_view text);

std::string serialize_dataset(const OfflineDataset& dataset);
OfflineDataset parse_dataset(std::string_view text);

/// {"values": [...]} documents, used for critic tables and solver output.
std::string serialize_values(const ValueTable& values);
ValueTable parse_values(std::string_view text);

std::string read_text_file(const std::filesystem::path& path);
/// Writes through a temporary sibling and renames it into place.
void write_text_file(const std::filesystem::path& path, std::string_view text);

TabularMdp load_mdp(const std::filesystem::path& path);
void save_mdp(const std::filesystem::path& path, const TabularMdp& mdp);
TabularPolicy load_policy(const std::filesystem::path& path);
void save_policy(const std::filesystem::path& path, const TabularPolicy& policy);
OfflineDataset load_dataset(const std::filesystem::path& path);
void save_dataset(const std::filesystem::path& path, const OfflineDataset& dataset);

}  // namespace vemlab
