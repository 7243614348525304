#include "uart_tx.h"

int main() {
  ap_uint<1> tx = 1;
  uart_tx(0x55, 1, &tx);
  return tx == 0 ? 0 : 1;
}
