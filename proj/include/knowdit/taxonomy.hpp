#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace knowdit {

// Closed business-type taxonomy. These are schema-level enums, not graph
// nodes; edges targeting them store the enum name as the endpoint.
enum class BusinessType {
    Lending,
    Dexes,
    Yield,
    Services,
    Derivatives,
    YieldAggregator,
    RealWorldAssets,
    Stablecoins,
    Indexes,
    Insurance,
    NFTMarketplace,
    NFTLending,
    CrossChain,
};

inline constexpr std::array<BusinessType, 13> kAllBusinessTypes = {
    BusinessType::Lending,         BusinessType::Dexes,
    BusinessType::Yield,           BusinessType::Services,
    BusinessType::Derivatives,     BusinessType::YieldAggregator,
    BusinessType::RealWorldAssets, BusinessType::Stablecoins,
    BusinessType::Indexes,         BusinessType::Insurance,
    BusinessType::NFTMarketplace,  BusinessType::NFTLending,
    BusinessType::CrossChain,
};

enum class AttackType {
    AccessControl,
    Arithmetic,
    BlockManipulation,
    Cryptographic,
    DenialOfService,
    Reentrancy,
    StorageAndMemory,
};

inline constexpr std::array<AttackType, 7> kAllAttackTypes = {
    AttackType::AccessControl,   AttackType::Arithmetic,
    AttackType::BlockManipulation, AttackType::Cryptographic,
    AttackType::DenialOfService, AttackType::Reentrancy,
    AttackType::StorageAndMemory,
};

std::string_view to_string(BusinessType t);
std::string_view to_string(AttackType t);
std::optional<BusinessType> business_type_from_string(std::string_view name);
std::optional<AttackType> attack_type_from_string(std::string_view name);

// Severity of an audit finding. Quality-assurance entries are filtered at
// ingest and never reach the graph.
enum class Severity { High, Medium };

std::string_view to_string(Severity s);
std::optional<Severity> severity_from_string(std::string_view name);

}  // namespace knowdit
