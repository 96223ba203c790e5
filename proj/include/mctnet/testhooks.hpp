#pragma once

namespace mctnet::testhooks {

// Fault-injection switches for exercising the verify suite's ability to
// catch broken gradients. Never set outside tests/CI.

void set_conv_backward_sign_flip(bool enabled);
bool conv_backward_sign_flip();

}  // namespace mctnet::testhooks
