#include "knowdit/taxonomy.hpp"

namespace knowdit {

std::string_view to_string(BusinessType t) {
    switch (t) {
        case BusinessType::Lending: return "Lending";
        case BusinessType::Dexes: return "Dexes";
        case BusinessType::Yield: return "Yield";
        case BusinessType::Services: return "Services";
        case BusinessType::Derivatives: return "Derivatives";
        case BusinessType::YieldAggregator: return "YieldAggregator";
        case BusinessType::RealWorldAssets: return "RealWorldAssets";
        case BusinessType::Stablecoins: return "Stablecoins";
        case BusinessType::Indexes: return "Indexes";
        case BusinessType::Insurance: return "Insurance";
        case BusinessType::NFTMarketplace: return "NFTMarketplace";
        case BusinessType::NFTLending: return "NFTLending";
        case BusinessType::CrossChain: return "CrossChain";
    }
    return "?";
}

std::string_view to_string(AttackType t) {
    switch (t) {
        case AttackType::AccessControl: return "AccessControl";
        case AttackType::Arithmetic: return "Arithmetic";
        case AttackType::BlockManipulation: return "BlockManipulation";
        case AttackType::Cryptographic: return "Cryptographic";
        case AttackType::DenialOfService: return "DenialOfService";
        case AttackType::Reentrancy: return "Reentrancy";
        case AttackType::StorageAndMemory: return "StorageAndMemory";
    }
    return "?";
}

std::optional<BusinessType> business_type_from_string(std::string_view name) {
    for (BusinessType t : kAllBusinessTypes) {
        if (to_string(t) == name) return t;
    }
    return std::nullopt;
}

std::optional<AttackType> attack_type_from_string(std::string_view name) {
    for (AttackType t : kAllAttackTypes) {
        if (to_string(t) == name) return t;
    }
    return std::nullopt;
}

std::string_view to_string(Severity s) {
    return s == Severity::High ? "High" : "Medium";
}

std::optional<Severity> severity_from_string(std::string_view name) {
    if (name == "High") return Severity::High;
    if (name == "Medium") return Severity::Medium;
    return std::nullopt;
}

}  // namespace knowdit
