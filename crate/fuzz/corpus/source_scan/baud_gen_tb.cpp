#include "baud_gen.h"

int main() {
  ap_uint<1> t = 0;
  for (int i = 0; i < 434; i++) baud_gen(&t);
  return t == 1 ? 0 : 1;
}
