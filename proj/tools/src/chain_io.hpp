#pragma once

#include <filesystem>

#include "json.hpp"

#include "avgmart/chain.hpp"

namespace avgmart::cli {

/// Chain document:
///   {"n_states": S, "N": N,
///    "transitions": [N matrices, each S rows of S entries],
///    "f": [N + 1 rows of S values],   row n is f_n
///    "mu0": [S probabilities]}
/// Violations raise SchemaError naming the key.
ChainModel chain_from_json(const nlohmann::json& doc);
ChainModel load_chain(const std::filesystem::path& path);
nlohmann::json chain_to_json(const ChainModel& chain);

}  // namespace avgmart::cli
