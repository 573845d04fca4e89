#include "qivc/pcg/signal.hpp"

#include "qivc/error.hpp"

namespace qivc::pcg {

Label parse_label(std::string_view text) {
  if (text == "normal") return Label::normal;
  if (text == "abnormal") return Label::abnormal;
  throw DataError("unknown label '" + std::string(text) + "' (expected normal or abnormal)");
}

std::string_view to_string(Label label) { return label == Label::abnormal ? "abnormal" : "normal"; }

void Recording::validate() const {
  if (!(sample_rate > 0)) throw DataError("recording '" + id + "': sample rate must be positive");
  if (samples.empty()) throw DataError("recording '" + id + "': no samples");
}

}  // namespace qivc::pcg
