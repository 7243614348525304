#include "uart_top.h"

int main() {
  ap_uint<1> tx = 1;
  uart_top(0xa5, &tx);
  return 0;
}
