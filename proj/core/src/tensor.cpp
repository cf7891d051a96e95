#include "motiongen/tensor.hpp"

#include "motiongen/common.hpp"

namespace motiongen {

Tensor::Tensor(int r, int c, double fill)
    : rows(r), cols(c), data((std::size_t)r * c, fill) {
  if (r < 0 || c < 0) throw InvalidArgument("negative tensor shape");
}

Tensor::Tensor(int r, int c, std::initializer_list<double> values)
    : rows(r), cols(c), data(values) {
  if ((std::size_t)r * c != data.size()) {
    throw InvalidArgument("initializer size does not match shape");
  }
}

double Tensor::item() const {
  if (size() != 1) throw InvalidArgument("item() on non-scalar tensor");
  return data[0];
}

}  // namespace motiongen
