/* Line parser for the fixture tree. */
#include "core.h"
#include "util.h"

#define PARSE_OK 0
#define PARSE_ERR (-1)
#define PARSE_EOF 1
#define TOKEN_MAX 64
#define IS_SPACE(c) ((c) == ' ' || (c) == '\t')

enum token_kind {
    TOK_WORD,
    TOK_NUMBER,
    TOK_PUNCT
};

struct token {
    enum token_kind kind;
    char text[TOKEN_MAX];
    int length;
};

struct parser_state {
    const char *cursor;
    int line;
    int column;
};

typedef struct parser_state parser_state_t;

static const char *parse_error_message = "";
static int parse_error_count;

int tok_is_word(const struct token *t)
{
    return t->kind == TOK_WORD;
}

int tok_is_number(const struct token *t)
{
    return t->kind == TOK_NUMBER;
}

static void advance(struct parser_state *p)
{
    if (*p->cursor == '\n') {
        p->line++;
        p->column = 0;
    }
    p->cursor++;
    p->column++;
}

int parse_token(struct parser_state *p, struct token *out)
{
    int n = 0;
    while (IS_SPACE(*p->cursor))
        advance(p);
    if (*p->cursor == '\0')
        return PARSE_EOF;
    while (n < TOKEN_MAX - 1 && *p->cursor && !IS_SPACE(*p->cursor)) {
        out->text[n++] = *p->cursor;
        advance(p);
    }
    out->text[n] = '\0';
    out->length = n;
    return PARSE_OK;
}

void parser_reset(struct parser_state *p, const char *input)
{
    p->cursor = input;
    p->line = 1;
    p->column = 0;
    parse_error_count = 0;
}
