#include <stddef.h>
#include <stdint.h>
#include "toycfg.h"

int LLVMFuzzerTestOneInput(const uint8_t *data, size_t size) {
    toycfg *c = toycfg_parse(data, size);
    if (!c)
        return 0;
    const char *last = toycfg_key_at(c, toycfg_count(c));
    const char *value = toycfg_get(c, last);
    (void)value;
    toycfg_free(c);
    return 0;
}
