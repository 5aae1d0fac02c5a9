#include "toycfg.h"

#include <stdio.h>
#include <stdlib.h>
#include <string.h>

struct entry {
    char *key;
    char *value;
    /* span of the raw value inside c->raw */
    size_t off;
    size_t len;
};

struct toycfg {
    uint8_t *raw;
    size_t raw_len;
    struct entry *entries;
    size_t count;
    size_t cap;
};

static char *dup_span(const uint8_t *p, size_t n) {
    char *s = malloc(n + 1);
    if (!s)
        return NULL;
    memcpy(s, p, n);
    s[n] = '\0';
    return s;
}

static int is_space(uint8_t ch) {
    return ch == ' ' || ch == '\t' || ch == '\r';
}

static int push(toycfg *c, char *key, char *value, size_t off, size_t len) {
    if (c->count == c->cap) {
        size_t ncap = c->cap ? c->cap * 2 : 4;
        struct entry *n = realloc(c->entries, ncap * sizeof *n);
        if (!n)
            return -1;
        c->entries = n;
        c->cap = ncap;
    }
    c->entries[c->count].key = key;
    c->entries[c->count].value = value;
    c->entries[c->count].off = off;
    c->entries[c->count].len = len;
    c->count++;
    return 0;
}

static void parse_line(toycfg *c, size_t start, size_t end) {
    const uint8_t *d = c->raw;
    while (start < end && is_space(d[start]))
        start++;
    if (start == end || d[start] == '#')
        return;
    size_t eq = start;
    while (eq < end && d[eq] != '=')
        eq++;
    if (eq == end)
        return;
    size_t kend = eq;
    while (kend > start && is_space(d[kend - 1]))
        kend--;
    if (kend == start)
        return;
    size_t vstart = eq + 1;
    while (vstart < end && is_space(d[vstart]))
        vstart++;
    size_t vend = end;
    while (vend > vstart && is_space(d[vend - 1]))
        vend--;
    char *key = dup_span(d + start, kend - start);
    char *value = dup_span(d + vstart, vend - vstart);
    if (!key || !value || push(c, key, value, vstart, vend - vstart) != 0) {
        free(key);
        free(value);
    }
}

toycfg *toycfg_parse(const uint8_t *data, size_t len) {
    toycfg *c = calloc(1, sizeof *c);
    if (!c)
        return NULL;
    c->raw = malloc(len ? len : 1);
    if (!c->raw) {
        free(c);
        return NULL;
    }
    if (len)
        memcpy(c->raw, data, len);
    c->raw_len = len;
    size_t line = 0;
    for (size_t i = 0; i <= len; i++) {
        if (i == len || c->raw[i] == '\n') {
            parse_line(c, line, i);
            line = i + 1;
        }
    }
    return c;
}

size_t toycfg_count(const toycfg *c) {
    return c->count;
}

const char *toycfg_key_at(const toycfg *c, size_t i) {
    return i < c->count ? c->entries[i].key : NULL;
}

static const struct entry *find(const toycfg *c, const char *key) {
    for (size_t i = c->count; i > 0; i--) {
        if (strcmp(c->entries[i - 1].key, key) == 0)
            return &c->entries[i - 1];
    }
    return NULL;
}

const char *toycfg_get(const toycfg *c, const char *key) {
    const struct entry *e = find(c, key);
    return e ? e->value : NULL;
}

/* Returns one past the closing quote. */
static const uint8_t *scan_quoted(const uint8_t *p) {
    p++;
    while (*p != '"') {
        if (*p == '\\')
            p++;
        p++;
    }
    return p + 1;
}

int toycfg_get_unquoted(const toycfg *c, const char *key, char *out, size_t cap) {
    const struct entry *e = find(c, key);
    if (!e || e->off > c->raw_len)
        return -1;
    const uint8_t *v = c->raw + e->off;
    size_t n = e->len;
    if (n > 0 && v[0] == '"') {
        const uint8_t *end = scan_quoted(v);
        n = (size_t)(end - v) - 2;
        v++;
    }
    if (n + 1 > cap)
        return -1;
    memcpy(out, v, n);
    out[n] = '\0';
    return (int)n;
}

int toycfg_set(toycfg *c, const char *key, const char *value) {
    char *k = strdup(key);
    char *v = strdup(value);
    if (!k || !v || push(c, k, v, c->raw_len, 0) != 0) {
        free(k);
        free(v);
        return -1;
    }
    return 0;
}

size_t toycfg_dump(const toycfg *c, char *out, size_t cap) {
    size_t used = 0;
    for (size_t i = 0; i < c->count; i++) {
        size_t need = strlen(c->entries[i].key) + strlen(c->entries[i].value) + 4;
        if (used + need > cap)
            break;
        used += (size_t)snprintf(out + used, cap - used, "%s = %s\n", c->entries[i].key, c->entries[i].value);
    }
    if (cap)
        out[used < cap ? used : cap - 1] = '\0';
    return used;
}

void toycfg_free(toycfg *c) {
    if (!c)
        return;
    for (size_t i = 0; i < c->count; i++) {
        free(c->entries[i].key);
        free(c->entries[i].value);
    }
    free(c->entries);
    free(c->raw);
    free(c);
}
