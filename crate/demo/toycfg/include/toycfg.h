#ifndef TOYCFG_H
#define TOYCFG_H

#include <stddef.h>
#include <stdint.h>

typedef struct toycfg toycfg;

/* Parses `key = value` lines. Returns NULL on allocation failure only. */
toycfg *toycfg_parse(const uint8_t *data, size_t len);
size_t toycfg_count(const toycfg *c);
/* Key of entry i, or NULL when i is out of range. */
const char *toycfg_key_at(const toycfg *c, size_t i);
/* key must not be NULL. */
const char *toycfg_get(const toycfg *c, const char *key);
/* Copies the value of key with surrounding quotes removed. Returns the
 * length written, or -1 when the key is missing or out is too small. */
int toycfg_get_unquoted(const toycfg *c, const char *key, char *out, size_t cap);
int toycfg_set(toycfg *c, const char *key, const char *value);
size_t toycfg_dump(const toycfg *c, char *out, size_t cap);
void toycfg_free(toycfg *c);

#endif
