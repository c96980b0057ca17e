#include "sswe/unet.hpp"

namespace sswe {

void NetConfig::validate() const {
  if (encoder_blocks < 1) throw ShapeError("NetConfig: encoder_blocks must be >= 1");
  if (channels < 1) throw ShapeError("NetConfig: channels must be >= 1");
  const Index div = Index{1} << encoder_blocks;
  if (height < div || width < div || height % div != 0 || width % div != 0) {
    throw ShapeError("NetConfig: input " + std::to_string(height) + "x" + std::to_string(width) +
                     " is not divisible by 2^" + std::to_string(encoder_blocks));
  }
  if (!(leaky_alpha >= 0.0 && leaky_alpha < 1.0)) {
    throw std::invalid_argument("NetConfig: leaky_alpha must be in [0,1)");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("NetConfig: dropout must be in [0,1)");
  if (!(init_range > 0.0)) throw std::invalid_argument("NetConfig: init_range must be positive");
}

std::vector<ConvSpec> layer_specs(const NetConfig& config) {
  const Index c = config.channels;
  const int convs = 2 * config.encoder_blocks;
  std::vector<ConvSpec> specs;
  for (int i = 1; i <= convs; ++i) specs.push_back({"enc-conv" + std::to_string(i), i == 1 ? 1 : c, c});
  specs.push_back({"lat-conv1", c, c});
  specs.push_back({"lat-conv2", c, c});
  for (int i = 1; i <= convs; ++i) {
    // First conv of each decoder block sees upsampled features plus the skip.
    specs.push_back({"dec-conv" + std::to_string(i), i % 2 == 1 ? 2 * c : c, c});
  }
  specs.push_back({"out-conv", c, 1});
  return specs;
}

}  // namespace sswe
