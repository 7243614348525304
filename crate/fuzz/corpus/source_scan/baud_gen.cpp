#include "baud_gen.h"

void baud_gen(ap_uint<1> *tick) {
  static ap_uint<16> count = 0;
  *tick = count == 433;
  count = count == 433 ? ap_uint<16>(0) : ap_uint<16>(count + 1);
}
