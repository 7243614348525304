#pragma once
#include <ap_int.h>

void baud_gen(ap_uint<1> *tick);
