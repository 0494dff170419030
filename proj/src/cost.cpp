#include "bioner/cost.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>

#include "bioner/error.hpp"
#include "bioner/text.hpp"

namespace bioner {

Money Money::from_decimal(double amount) { return Money(std::llround(amount * 1e9)); }

std::int64_t Money::cents() const noexcept {
  constexpr std::int64_t kPerCent = 10'000'000;
  const std::int64_t half = kPerCent / 2;
  return nanos_ >= 0 ? (nanos_ + half) / kPerCent : -((-nanos_ + half) / kPerCent);
}

std::string Money::str(int decimals) const {
  decimals = std::clamp(decimals, 0, 9);
  std::int64_t scale = 1;
  for (int i = 0; i < 9 - decimals; ++i) scale *= 10;
  const bool negative = nanos_ < 0;
  const std::int64_t mag = negative ? -nanos_ : nanos_;
  const std::int64_t units = (mag + scale / 2) / scale;
  std::int64_t div = 1;
  for (int i = 0; i < decimals; ++i) div *= 10;
  std::string out = (negative ? "-" : "") + std::to_string(units / div);
  if (decimals > 0) {
    std::string frac = std::to_string(units % div);
    out += "." + std::string(static_cast<std::size_t>(decimals) - frac.size(), '0') + frac;
  }
  return out;
}

TokenPrice TokenPrice::per_million(double amount) {
  if (!(amount >= 0.0) || !std::isfinite(amount)) throw ConfigError("prices must be finite and >= 0");
  TokenPrice p;
  p.micros_ = std::llround(amount * 1e6);
  return p;
}

Money TokenPrice::cost(std::int64_t tokens) const {
  if (tokens < 0) throw ArgumentError("negative token count");
  // tokens * (micros / 1e6 per 1M tokens) = tokens * micros / 1e3 nanos.
  const __int128 num = static_cast<__int128>(tokens) * micros_;
  return Money::from_nanos(static_cast<std::int64_t>((num + 500) / 1000));
}

// ---------------------------------------------------------------------------

PriceTable parse_price_table(std::string_view content) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(content);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("price sheet: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("price sheet must be a JSON object keyed by model name");
  PriceTable table;
  for (const auto& [model, p] : doc.items()) {
    if (!p.is_object() || !p.contains("prompt_price") || !p.contains("completion_price"))
      throw ConfigError("price sheet for " + model + " needs prompt_price and completion_price");
    PriceSheet s;
    s.model_name = model;
    s.prompt_price = TokenPrice::per_million(p["prompt_price"].get<double>());
    s.completion_price = TokenPrice::per_million(p["completion_price"].get<double>());
    if (p.contains("training_price") && !p["training_price"].is_null())
      s.training_price = TokenPrice::per_million(p["training_price"].get<double>());
    table.emplace(model, std::move(s));
  }
  return table;
}

PriceTable load_price_table(const std::filesystem::path& path) { return parse_price_table(text::read_file(path)); }

const PriceSheet& price_for(const PriceTable& table, std::string_view model) {
  auto it = table.find(std::string(model));
  if (it == table.end()) throw ConfigError("no price sheet for model '" + std::string(model) + "'");
  return it->second;
}

CostReport estimate_inference_cost(const TokenTotals& totals, const PriceSheet& prices) {
  CostReport r;
  r.model_name = prices.model_name;
  r.token_totals = totals;
  const Money prompt = prices.prompt_price.cost(totals.prompt_tokens);
  const Money completion = prices.completion_price.cost(totals.completion_tokens);
  r.breakdown["prompt"] = prompt;
  r.breakdown["completion"] = completion;
  r.inference_cost = prompt + completion;
  return r;
}

CostReport estimate_inference_cost(std::span<const LlmExchange> exchanges, const PriceTable& prices,
                                   const TokenizerConfig& tokenizer) {
  CostReport r;
  Money prompt;
  Money completion;
  std::map<std::string, std::size_t> slot;
  for (const auto& ex : exchanges) {
    const PriceSheet& sheet = price_for(prices, ex.request.model_name);
    if (r.model_name.empty()) r.model_name = sheet.model_name;
    const auto pt = exchange_prompt_tokens(ex, tokenizer);
    const auto ct = exchange_completion_tokens(ex, tokenizer);
    r.token_totals.prompt_tokens += pt;
    r.token_totals.completion_tokens += ct;
    const Money p = sheet.prompt_price.cost(pt);
    const Money c = sheet.completion_price.cost(ct);
    prompt += p;
    completion += c;
    std::string id = ex.request.bundle.meta(meta_keys::kQueryId);
    auto [it, fresh] = slot.emplace(id, r.per_item.size());
    if (fresh) r.per_item.emplace_back(id, Money{});
    r.per_item[it->second].second += p + c;
  }
  r.breakdown["prompt"] = prompt;
  r.breakdown["completion"] = completion;
  r.inference_cost = prompt + completion;
  return r;
}

Money estimate_training_cost(std::int64_t corpus_tokens, int epochs, const PriceSheet& prices) {
  if (!prices.training_price) throw ConfigError("no training_price for model '" + prices.model_name + "'");
  if (epochs <= 0) throw ArgumentError("epochs must be positive");
  if (corpus_tokens < 0) throw ArgumentError("negative token count");
  return prices.training_price->cost(corpus_tokens * epochs);
}

void add_training(CostReport& report, std::int64_t corpus_tokens, int epochs, const PriceSheet& prices) {
  report.training_cost = estimate_training_cost(corpus_tokens, epochs, prices);
  report.token_totals.training_tokens = corpus_tokens * epochs;
  report.breakdown["training"] = report.training_cost;
}

nlohmann::ordered_json cost_to_json(const CostReport& r) {
  nlohmann::ordered_json j;
  j["model"] = r.model_name;
  j["inference_cost"] = r.inference_cost.str(6);
  j["training_cost"] = r.training_cost.str(6);
  j["total_cost"] = r.total().str(6);
  j["token_totals"] = {{"prompt_tokens", r.token_totals.prompt_tokens},
                       {"completion_tokens", r.token_totals.completion_tokens},
                       {"training_tokens", r.token_totals.training_tokens}};
  nlohmann::ordered_json b = nlohmann::ordered_json::object();
  for (const auto& [k, v] : r.breakdown) b[k] = v.str(6);
  j["breakdown"] = std::move(b);
  nlohmann::ordered_json items = nlohmann::ordered_json::object();
  for (const auto& [id, v] : r.per_item) items[id] = v.str(9);
  j["per_item"] = std::move(items);
  return j;
}

std::string cost_cell(const CostReport& r) {
  if (r.training_cost.nanos() > 0) return "($" + r.training_cost.str() + "+$" + r.inference_cost.str() + ")";
  return "($" + r.inference_cost.str() + ")";
}

std::string render_cost_table(std::span<const CostRow> rows) {
  if (rows.empty()) return "(no results)\n";
  std::vector<std::string> systems;
  std::vector<std::string> datasets;
  std::map<std::pair<std::string, std::string>, std::string> cells;
  for (const auto& r : rows) {
    if (std::find(systems.begin(), systems.end(), r.system) == systems.end()) systems.push_back(r.system);
    if (std::find(datasets.begin(), datasets.end(), r.dataset) == datasets.end()) datasets.push_back(r.dataset);
    cells[{r.system, r.dataset}] = cost_cell(r.report);
  }
  std::vector<std::vector<std::string>> table;
  std::vector<std::string> header{"Cost (T+I)"};
  header.insert(header.end(), datasets.begin(), datasets.end());
  table.push_back(std::move(header));
  for (const auto& s : systems) {
    std::vector<std::string> line{s};
    for (const auto& d : datasets) {
      auto it = cells.find({s, d});
      line.push_back(it == cells.end() ? "-" : it->second);
    }
    table.push_back(std::move(line));
  }
  std::vector<std::size_t> widths(table[0].size(), 0);
  for (const auto& line : table) {
    for (std::size_t c = 0; c < line.size(); ++c) widths[c] = std::max(widths[c], line[c].size());
  }
  std::string out;
  for (std::size_t r = 0; r < table.size(); ++r) {
    std::string line;
    for (std::size_t c = 0; c < table[r].size(); ++c) {
      if (c > 0) line += "  ";
      line += table[r][c] + std::string(widths[c] - table[r][c].size(), ' ');
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + "\n";
  }
  return out;
}

}  // namespace bioner
