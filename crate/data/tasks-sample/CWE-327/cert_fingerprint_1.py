def certificate_fingerprint(data):
    '''
    Return a hex digest fingerprint for the given certificate bytes.
    '''
