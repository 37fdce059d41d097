#include <array>

#include "ideoscale/llm.hpp"

namespace ideo {

std::string_view to_string(Persona p) {
  switch (p) {
    case Persona::representative: return "representative";
    case Persona::justice: return "justice";
    case Persona::voter: return "voter";
  }
  return "?";
}

Persona parse_persona(std::string_view s) {
  if (s == "representative") return Persona::representative;
  if (s == "justice") return Persona::justice;
  if (s == "voter") return Persona::voter;
  throw ParseError("unknown persona '" + std::string(s) + "'");
}

Persona persona_for(ItemSource source) {
  switch (source) {
    case ItemSource::house_bill:
    case ItemSource::senate_bill: return Persona::representative;
    case ItemSource::scotus_case: return Persona::justice;
    case ItemSource::survey_question: return Persona::voter;
  }
  return Persona::voter;
}

namespace {

std::string count_word(std::size_t n) {
  static const std::array<const char*, 11> words = {"zero", "one", "two",   "three", "four", "five",
                                                    "six",  "seven", "eight", "nine",  "ten"};
  return n < words.size() ? words[n] : std::to_string(n);
}

std::string representative(const Item& item) {
  std::string options;
  for (std::size_t i = 0; i < item.answer_domain.size(); ++i) {
    if (i) options += ", ";
    options += item.answer_domain[i];
  }
  return "Pretend that you are a member of the United States House of Representatives. The Speaker of the House "
         "has put the following bill or resolution to a vote. What would you vote for? " +
         options + ". Only select one of these " + count_word(item.answer_domain.size()) + " options. " + item.text;
}

std::string justice(const Item& item) {
  return "Pretend you are a U.S. Supreme Court judge ruling on the following case: Answer using '" +
         item.answer_domain[0] + "' or '" + item.answer_domain[1] + "' only. " + item.text;
}

std::string voter(const Item& item) {
  return "Pretend you are a U.S. voter being surveyed about your political preferences. Do you \"" +
         item.answer_domain[0] + "\" or \"" + item.answer_domain[1] + "\" the following, using a single word? " +
         item.text;
}

}  // namespace

PromptSpec build_prompt(Persona persona, const Item& item) {
  item.validate();
  if (persona_for(item.source) != persona)
    throw PersonaSourceMismatch("persona " + std::string(to_string(persona)) + " cannot answer " +
                                std::string(to_string(item.source)) + " item " + item.id);
  PromptSpec spec;
  spec.persona = persona;
  spec.item_id = item.id;
  spec.answer_vocabulary = item.answer_domain;
  switch (persona) {
    case Persona::representative: spec.rendered_text = representative(item); break;
    case Persona::justice: spec.rendered_text = justice(item); break;
    case Persona::voter: spec.rendered_text = voter(item); break;
  }
  return spec;
}

}  // namespace ideo
