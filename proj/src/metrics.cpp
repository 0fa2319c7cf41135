#include "glean/metrics.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "glean/errors.hpp"
#include "glean/imaging.hpp"
#include "glean/losses.hpp"

namespace glean {

double psnr_from_mse(double mse, double peak) {
  if (mse <= 0.0) return kPsnrInfinity;
  return 10.0 * std::log10(peak * peak / mse);
}

double psnr(const Tensor& a, const Tensor& b, double peak) {
  if (!a.same_shape(b)) throw ShapeError("psnr: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double d = (static_cast<double>(a[i]) - b[i]) * 127.5;
    s += d * d;
  }
  return psnr_from_mse(a.numel() ? s / static_cast<double>(a.numel()) : 0.0, peak);
}

double perceptual_distance(const Tensor& a, const Tensor& b) {
  ag::NoGradGuard guard;
  return perceptual_loss(ag::Var(a), ag::Var(b)).value()[0];
}

std::vector<std::vector<double>> embedding(const Tensor& img) {
  ag::NoGradGuard guard;
  const Tensor pooled = ag::global_avg_pool(FeatureNet::shared().features(ag::Var(img))).value();
  const int n = pooled.dim(0), c = pooled.dim(1);
  std::vector<std::vector<double>> out(n, std::vector<double>(c));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j) out[i][j] = pooled[i * c + j];
  return out;
}

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ShapeError("cosine_similarity: length mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

double embedding_cosine(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw ShapeError("embedding_cosine: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const auto ea = embedding(a);
  const auto eb = embedding(b);
  double s = 0.0;
  for (std::size_t i = 0; i < ea.size(); ++i) s += cosine_similarity(ea[i], eb[i]);
  return s / static_cast<double>(ea.size());
}

Tensor quantize_8bit(const Tensor& img) {
  Tensor out = img;
  for (float& v : out.values()) v = from_byte(to_byte(v));
  return out;
}

nlohmann::json json_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

nlohmann::json EvalTable::to_json() const {
  nlohmann::json per = nlohmann::json::array();
  for (const auto& r : rows) {
    per.push_back({{"id", r.id},
                   {"psnr", json_number(r.psnr)},
                   {"lpips_proxy", json_number(r.lpips_proxy)},
                   {"embcos_proxy", json_number(r.embcos_proxy)}});
  }
  return {{"method", method},
          {"split", split},
          {"per_image", std::move(per)},
          {"means",
           {{"psnr", json_number(means.psnr)},
            {"lpips_proxy", json_number(means.lpips_proxy)},
            {"embcos_proxy", json_number(means.embcos_proxy)}}}};
}

std::string EvalTable::to_text() const {
  std::size_t id_w = 4;
  for (const auto& r : rows) id_w = std::max(id_w, r.id.size());
  std::ostringstream os;
  os << "method: " << method << "  split: " << split << '\n';
  os << std::left << std::setw(static_cast<int>(id_w)) << "id" << std::right << std::setw(12) << "PSNR"
     << std::setw(14) << "LPIPS-proxy" << std::setw(14) << "EmbCos-proxy" << '\n';
  auto line = [&](const MetricRow& r) {
    os << std::left << std::setw(static_cast<int>(id_w)) << r.id << std::right << std::fixed;
    if (std::isinf(r.psnr)) os << std::setw(12) << "inf";
    else os << std::setw(12) << std::setprecision(4) << r.psnr;
    os << std::setw(14) << std::setprecision(6) << r.lpips_proxy << std::setw(14) << std::setprecision(6)
       << r.embcos_proxy << '\n';
  };
  for (const auto& r : rows) line(r);
  line(means);
  return os.str();
}

EvalTable evaluate_split(const std::string& method, const std::string& split, const std::vector<std::string>& ids,
                         const std::vector<Tensor>& hr_images, int scale, const Upscaler& upscale, bool quantize) {
  if (hr_images.empty()) throw InvalidArgument("evaluate_split: empty split");
  if (ids.size() != hr_images.size()) throw InvalidArgument("evaluate_split: ids and images differ in length");
  EvalTable table;
  table.method = method;
  table.split = split;
  table.means.id = "mean";
  double sp = 0.0, sl = 0.0, se = 0.0;
  for (std::size_t i = 0; i < hr_images.size(); ++i) {
    const Tensor& hr = hr_images[i];
    const Tensor lr = scale == 1 ? hr : make_pair(hr, scale).lr;
    Tensor sr = upscale(lr);
    if (quantize) sr = quantize_8bit(sr);
    if (!sr.same_shape(hr)) {
      throw ShapeError("method '" + method + "' produced " + shape_str(sr.shape()) + " for HR " + shape_str(hr.shape()));
    }
    MetricRow r{ids[i], psnr(sr, hr), perceptual_distance(sr, hr), embedding_cosine(sr, hr)};
    sp += r.psnr;
    sl += r.lpips_proxy;
    se += r.embcos_proxy;
    table.rows.push_back(std::move(r));
  }
  const double n = static_cast<double>(hr_images.size());
  table.means.psnr = sp / n;
  table.means.lpips_proxy = sl / n;
  table.means.embcos_proxy = se / n;
  return table;
}

Upscaler bicubic_upscaler(int scale) {
  return [scale](const Tensor& lr) { return bicubic_resize(lr, lr.h() * scale, lr.w() * scale); };
}

}  // namespace glean
