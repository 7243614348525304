#include "uart_tx.h"

void uart_tx(ap_uint<8> data, ap_uint<1> tick, ap_uint<1> *tx) {
#pragma HLS INTERFACE port=tx mode=ap_none
  static ap_uint<4> bit = 0;
  static ap_uint<10> frame = 0x3ff;
  if (tick) {
    if (bit == 0) frame = (ap_uint<10>(1) << 9) | (ap_uint<10>(data) << 1);
    *tx = frame[bit];
    bit = bit == 9 ? ap_uint<4>(0) : ap_uint<4>(bit + 1);
  }
}
