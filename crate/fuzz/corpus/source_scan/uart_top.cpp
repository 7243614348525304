#include "uart_top.h"
#include "baud_gen.h"
#include "uart_tx.h"

void uart_top(ap_uint<8> data, ap_uint<1> *tx) {
  ap_uint<1> tick;
  baud_gen(&tick);
  uart_tx(data, tick, tx);
}
