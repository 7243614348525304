#pragma once
#include <ap_int.h>

void uart_tx(ap_uint<8> data, ap_uint<1> tick, ap_uint<1> *tx);
