#include "mctnet/testhooks.hpp"

namespace mctnet::testhooks {

namespace {
bool g_conv_backward_sign_flip = false;
}

void set_conv_backward_sign_flip(bool enabled) {
  g_conv_backward_sign_flip = enabled;
}

bool conv_backward_sign_flip() { return g_conv_backward_sign_flip; }

}  // namespace mctnet::testhooks
