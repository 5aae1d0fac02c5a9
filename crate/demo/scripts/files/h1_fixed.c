#include <stddef.h>
#include <stdint.h>
#include "toycfg.h"

int LLVMFuzzerTestOneInput(const uint8_t *data, size_t size) {
    toycfg *c = toycfg_parse(data, size);
    if (!c)
        return 0;
    for (size_t i = 0; i < toycfg_count(c); i++) {
        const char *key = toycfg_key_at(c, i);
        if (key)
            (void)toycfg_get(c, key);
    }
    toycfg_free(c);
    return 0;
}
