#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "bioner/llm.hpp"

namespace bioner {

// Currency amount held as an integer count of 1e-9 units, so sums over large
// runs never drift.
class Money {
 public:
  constexpr Money() = default;
  static constexpr Money from_nanos(std::int64_t nanos) { return Money(nanos); }
  static Money from_decimal(double amount);

  constexpr std::int64_t nanos() const noexcept { return nanos_; }
  // Rounded half away from zero to the minimal currency unit (cents).
  std::int64_t cents() const noexcept;
  double value() const noexcept { return static_cast<double>(nanos_) / 1e9; }
  // Fixed-point rendering with `decimals` places.
  std::string str(int decimals = 2) const;

  constexpr Money& operator+=(Money o) noexcept {
    nanos_ += o.nanos_;
    return *this;
  }
  friend constexpr Money operator+(Money a, Money b) noexcept { return a += b; }
  friend constexpr bool operator==(Money a, Money b) noexcept = default;
  friend constexpr auto operator<=>(Money a, Money b) noexcept = default;

 private:
  constexpr explicit Money(std::int64_t nanos) : nanos_(nanos) {}
  std::int64_t nanos_ = 0;
};

// Price per one million tokens, stored exactly to 1e-6 currency units.
class TokenPrice {
 public:
  TokenPrice() = default;
  static TokenPrice per_million(double amount);

  std::int64_t micros_per_million() const noexcept { return micros_; }
  double per_million_value() const noexcept { return static_cast<double>(micros_) / 1e6; }
  // tokens * price / 1e6, rounded half up to the nearest nano-unit.
  Money cost(std::int64_t tokens) const;

 private:
  std::int64_t micros_ = 0;
};

struct PriceSheet {
  std::string model_name;
  TokenPrice prompt_price;
  TokenPrice completion_price;
  std::optional<TokenPrice> training_price;  // per 1M tokens per epoch
};

using PriceTable = std::map<std::string, PriceSheet>;

// JSON object keyed by model name:
// {"<model>": {"prompt_price": x, "completion_price": y, "training_price": z?}}
PriceTable parse_price_table(std::string_view content);
PriceTable load_price_table(const std::filesystem::path& path);
const PriceSheet& price_for(const PriceTable& table, std::string_view model);

struct TokenTotals {
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
  std::int64_t training_tokens = 0;

  TokenTotals& operator+=(const TokenTotals& o) {
    prompt_tokens += o.prompt_tokens;
    completion_tokens += o.completion_tokens;
    training_tokens += o.training_tokens;
    return *this;
  }
  bool operator==(const TokenTotals&) const = default;
};

struct CostReport {
  std::string model_name;
  Money inference_cost;
  Money training_cost;
  TokenTotals token_totals;
  // "prompt", "completion" and (when trained) "training" components.
  std::map<std::string, Money> breakdown;
  // Inference cost per query id, in first-seen order.
  std::vector<std::pair<std::string, Money>> per_item;

  Money total() const { return inference_cost + training_cost; }
};

CostReport estimate_inference_cost(const TokenTotals& totals, const PriceSheet& prices);
// Measurement mode: token counts from logged exchanges (see TokenizerConfig).
// Throws ConfigError when an exchange's model has no price sheet.
CostReport estimate_inference_cost(std::span<const LlmExchange> exchanges, const PriceTable& prices,
                                   const TokenizerConfig& tokenizer = {});

// corpus_tokens * epochs * training_price / 1e6.
Money estimate_training_cost(std::int64_t corpus_tokens, int epochs, const PriceSheet& prices);

// Adds a training component to an inference report.
void add_training(CostReport& report, std::int64_t corpus_tokens, int epochs, const PriceSheet& prices);

nlohmann::ordered_json cost_to_json(const CostReport& report);

// "($inference)" for pure ICL, "($training+$inference)" when trained.
std::string cost_cell(const CostReport& report);

struct CostRow {
  std::string system;
  std::string dataset;
  CostReport report;
};

// Systems as rows, datasets as columns, "Cost (T+I)" cells.
std::string render_cost_table(std::span<const CostRow> rows);

}  // namespace bioner
