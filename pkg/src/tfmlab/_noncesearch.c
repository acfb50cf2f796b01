/* Hot loop for proof-of-work nonce search.
 *
 * search(prefix, start_nonce, max_trials, target) scans nonces
 * start, start+1, ... (mod 2^64), hashing SHA256(prefix || nonce_be8)
 * until the digest, read as a big-endian integer, is below `target`
 * (32 bytes, big-endian).  Returns (nonce, digest) or None if the
 * trial budget runs out.
 *
 * The SHA-256 state after the prefix's whole 64-byte blocks is computed
 * once and re-used for every trial, and the GIL is released while
 * scanning, so callers may mine several blocks from one thread pool.
 */

#define PY_SSIZE_T_CLEAN
#define OPENSSL_SUPPRESS_DEPRECATED 1

#include <Python.h>
#include <openssl/sha.h>
#include <stdint.h>
#include <string.h>

static PyObject *
search(PyObject *self, PyObject *args)
{
    Py_buffer prefix, target;
    unsigned long long start, max_trials;

    if (!PyArg_ParseTuple(args, "y*KKy*", &prefix, &start, &max_trials, &target))
        return NULL;
    if (target.len != 32) {
        PyBuffer_Release(&prefix);
        PyBuffer_Release(&target);
        PyErr_SetString(PyExc_ValueError, "target must be 32 bytes");
        return NULL;
    }

    const unsigned char *pfx = (const unsigned char *)prefix.buf;
    const unsigned char *tgt = (const unsigned char *)target.buf;
    Py_ssize_t head = (prefix.len / 64) * 64;
    Py_ssize_t tail_len = prefix.len - head;

    SHA256_CTX mid;
    SHA256_Init(&mid);
    if (head > 0)
        SHA256_Update(&mid, pfx, (size_t)head);

    unsigned char tail[72 + 8]; /* tail (< 64 bytes) plus the 8-byte nonce */
    memcpy(tail, pfx + head, (size_t)tail_len);

    unsigned char dig[32];
    uint64_t nonce = (uint64_t)start;
    unsigned long long i;
    int found = 0;

    Py_BEGIN_ALLOW_THREADS
    for (i = 0; i < max_trials; i++) {
        int b;
        for (b = 0; b < 8; b++)
            tail[tail_len + b] = (unsigned char)(nonce >> (8 * (7 - b)));
        SHA256_CTX ctx;
        memcpy(&ctx, &mid, sizeof(ctx));
        SHA256_Update(&ctx, tail, (size_t)tail_len + 8);
        SHA256_Final(dig, &ctx);
        if (memcmp(dig, tgt, 32) < 0) {
            found = 1;
            break;
        }
        nonce++; /* uint64 wraps */
    }
    Py_END_ALLOW_THREADS

    PyBuffer_Release(&prefix);
    PyBuffer_Release(&target);

    if (!found)
        Py_RETURN_NONE;
    return Py_BuildValue("(Ky#)", (unsigned long long)nonce, dig, (Py_ssize_t)32);
}

static PyMethodDef methods[] = {
    {"search", search, METH_VARARGS,
     "search(prefix, start_nonce, max_trials, target) -> (nonce, digest) | None"},
    {NULL, NULL, 0, NULL},
};

static struct PyModuleDef moduledef = {
    PyModuleDef_HEAD_INIT, "_noncesearch", NULL, -1, methods,
};

PyMODINIT_FUNC
PyInit__noncesearch(void)
{
    return PyModule_Create(&moduledef);
}
