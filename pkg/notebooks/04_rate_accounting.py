# coding: utf-8

# # Counting bits
#
# How big is the key, how big is the public store, and how many guesses
# does a server need? Everything here is exact integer arithmetic with a
# Stirling-style approximation alongside.

# In[1]:

from sca.rate import binary_entropy, guess_log2, log2_binomial, public_bits, rate_bpp, rate_report, secret_bits


# A key records which k of m indices are used, in each of L groups.

# In[2]:

bits = secret_bits(512, 128, 20)
print(bits.exact, bits.stirling, bits.stirling / 8 / 1024, "KB")
print(20 * 512 * binary_entropy(128 / 512))


# The public side stores k' values per group. At 32 bits per value:

# In[3]:

print(public_bits(512, 256, 20), "bits")


# The rate is the key size (Stirling form) spread over every channel of
# every pixel of a 3x128x128 image.

# In[4]:

shape = (3, 128, 128)
for k in (128, 64):
    print(k, round(rate_bpp(secret_bits(512, k, 20).stirling, shape), 4))


# A server that knows k' and k but not the key has to pick k of k' in each
# group. The log of the number of candidates:

# In[5]:

print(guess_log2(256, 128, 20))
print(log2_binomial(256, 128) * 20)


# rate_report bundles all of it; to_text() is what the CLI prints.

# In[6]:

print(rate_report(512, 128, 256, 20, shape).to_text())
