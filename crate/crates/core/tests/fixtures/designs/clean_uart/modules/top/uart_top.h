#pragma once
#include <ap_int.h>

void uart_top(ap_uint<8> data, ap_uint<1> *tx);
