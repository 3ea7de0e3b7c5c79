# coding: utf-8

# # Sharing, unlocking and guessing
#
# The owner publishes each code padded with decoy entries and keeps only the
# support (which indices are real) as the key. With the key the decoys are
# dropped exactly. Without it the server sees k' = k + k_n plausible entries
# per group.

# In[1]:

import numpy as np

from sca import Dataset, NetworkConfig, train
from sca.data import synthetic_images
from sca.metrics import psnr
from sca.pipeline import guess_decode, keyless_decode, reconstruct, share
from sca.protocol import extract_support, verify_support

images = synthetic_images(400, seed=1)
data = Dataset.from_array(images)
model = train(NetworkConfig.desk(), data, epochs=3, seed=0).model


# share() encodes the items, fits a per-group magnitude model on the batch,
# and returns the public store, the key file and the plain codes.

# In[2]:

items = [(i, data.image(i)) for i in data.test_ids[:30]]
store, keys, codes = share(model, items, seed=0)
print("k' =", store.k_prime, " key size per item:", keys.L * keys.k, "indices")


# Unlocking with the key gives back the plain code bit for bit.

# In[3]:

item_id, img = items[0]
authorized = reconstruct(model, store, item_id, keys)
print(np.array_equal(authorized, model.decode(codes[0])))


# The decoys follow the same magnitude law as the real entries, so sorting
# by magnitude does not separate them.

# In[4]:

u_p = store[item_id]
true = extract_support(codes[0])
for g in range(u_p.values.shape[0]):
    real = set(true.indices[g].tolist())
    mags = sorted(((abs(v), i in real) for i, v in zip(u_p.indices[g], u_p.values[g])), reverse=True)
    print(g, "".join("R" if r else "." for _, r in mags))


# Decoding the public code as it stands, and decoding a random k-subset of
# it, are the two things a server could try.

# In[5]:

keyless = keyless_decode(model, u_p)[0]
guessed, guess = guess_decode(model, u_p, model.config.k, seed=0)
print("correct guesses per group", verify_support(guess, true))
for name, r in [("authorized", authorized[0]), ("keyless", keyless), ("guess", guessed[0])]:
    print(f"{name:10s} {psnr(img, r):6.2f} dB")
