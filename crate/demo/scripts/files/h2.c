#include <stddef.h>
#include <stdint.h>
#include "toycfg.h"

int LLVMFuzzerTestOneInput(const uint8_t *data, size_t size) {
    char buf[256];
    toycfg *c = toycfg_parse(data, size);
    if (!c)
        return 0;
    toycfg_set(c, "fuzz", "1");
    const char *key = toycfg_key_at(c, 0);
    if (key)
        toycfg_get_unquoted(c, key, buf, sizeof buf);
    toycfg_dump(c, buf, sizeof buf);
    toycfg_free(c);
    return 0;
}
