#include "slua/model.hpp"

namespace slua {

void Hyperparams::validate() const {
  if (dim < 1) throw InputError("dim must be >= 1");
  if (win < 1 || win % 2 == 0) throw InputError("win must be odd and >= 1");
  if (k < 1) throw InputError("k must be >= 1");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InputError("alpha must be in [0, 1]");
}

}  // namespace slua
