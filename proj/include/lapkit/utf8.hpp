#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace lapkit {

// Minimal UTF-8 iteration. Invalid bytes are passed through as single-byte
// units so tokenization remains total on arbitrary input.
inline std::size_t utf8_char_len(unsigned char lead) {
  if (lead < 0x80) return 1;
  if ((lead >> 5) == 0x6) return 2;
  if ((lead >> 4) == 0xe) return 3;
  if ((lead >> 3) == 0x1e) return 4;
  return 1;
}

// Splits a string into UTF-8 character chunks.
inline std::vector<std::string> utf8_chars(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    std::size_t len = utf8_char_len(static_cast<unsigned char>(s[i]));
    if (i + len > s.size()) len = 1;
    out.emplace_back(s.substr(i, len));
    i += len;
  }
  return out;
}

// Decodes the code point starting at s[i]; advances i past it.
inline char32_t utf8_decode(std::string_view s, std::size_t& i) {
  const auto lead = static_cast<unsigned char>(s[i]);
  std::size_t len = utf8_char_len(lead);
  if (i + len > s.size()) len = 1;
  char32_t cp = 0;
  switch (len) {
    case 1:
      cp = lead;
      break;
    case 2:
      cp = lead & 0x1f;
      break;
    case 3:
      cp = lead & 0x0f;
      break;
    default:
      cp = lead & 0x07;
      break;
  }
  for (std::size_t k = 1; k < len; ++k)
    cp = (cp << 6) | (static_cast<unsigned char>(s[i + k]) & 0x3f);
  i += len;
  return cp;
}

bool is_unicode_punct(char32_t cp);

}  // namespace lapkit
